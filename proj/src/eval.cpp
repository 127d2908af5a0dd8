#include "fatlab/eval.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatlab/errors.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

nlohmann::json to_json(const EvalReport& r) {
  return {{"top1", r.top1}, {"top5", r.top5}, {"top10", r.top10},
          {"mAP", r.mean_ap}, {"queries", r.queries}, {"skipped", r.skipped}};
}

EvalReport evaluate_retrieval(const RowMatrix& query, std::span<const Label> query_labels,
                              const RowMatrix& gallery, std::span<const Label> gallery_labels) {
  if (gallery.rows() == 0) throw InvalidArgumentError("evaluate_retrieval: empty gallery");
  if (static_cast<std::size_t>(query.rows()) != query_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size()) {
    throw InvalidArgumentError("evaluate_retrieval: label count mismatch");
  }
  if (query.rows() > 0 && query.cols() != gallery.cols()) {
    throw InvalidArgumentError("evaluate_retrieval: query and gallery dimensions differ");
  }
  const auto g = static_cast<std::size_t>(gallery.rows());
  EvalReport report;
  std::vector<double> dist(g);
  std::vector<std::size_t> order(g);
  double top1 = 0, top5 = 0, top10 = 0, ap_sum = 0;
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    const Label y = query_labels[static_cast<std::size_t>(q)];
    if (std::find(gallery_labels.begin(), gallery_labels.end(), y) == gallery_labels.end()) {
      ++report.skipped;
      continue;
    }
    for (std::size_t j = 0; j < g; ++j) dist[j] = (query.row(q) - gallery.row(static_cast<Eigen::Index>(j))).norm();
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::size_t first_hit = g;
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < g; ++r) {
      if (gallery_labels[order[r]] != y) continue;
      if (first_hit == g) first_hit = r;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    top1 += first_hit < 1;
    top5 += first_hit < 5;
    top10 += first_hit < 10;
    ap_sum += precision_sum / static_cast<double>(hits);
    ++report.queries;
  }
  if (report.queries > 0) {
    const auto n = static_cast<double>(report.queries);
    report.top1 = top1 / n;
    report.top5 = top5 / n;
    report.top10 = top10 / n;
    report.mean_ap = ap_sum / n;
  }
  return report;
}

EvalReport evaluate_model(const Network& net, const Dataset& query, const Dataset& gallery) {
  if (query.input_dim() != net.input_dim() || gallery.input_dim() != net.input_dim()) {
    throw InvalidArgumentError("evaluation data input dim does not match the model (" +
                               std::to_string(net.input_dim()) + ")");
  }
  return evaluate_retrieval(embed_dataset(net, query), query.reference_labels(),
                            embed_dataset(net, gallery), gallery.reference_labels());
}

EvalReport evaluate_transfer(const Network& net, const Dataset& target, int queries_per_identity) {
  if (target.input_dim() != net.input_dim()) {
    throw InvalidArgumentError("transfer dataset input dim " + std::to_string(target.input_dim()) +
                               " does not match the model (" + std::to_string(net.input_dim()) + ")");
  }
  const HoldoutSplit split = split_holdout(target, queries_per_identity);
  return evaluate_model(net, split.query, split.train);
}

std::uint64_t count_triplets_vanilla(std::uint64_t p, std::uint64_t k) {
  if (k == 0) return 0;
  return p * k * (k - 1) * (p * k - k);
}

std::uint64_t count_pairs_hard_mining(std::uint64_t p, std::uint64_t k) {
  const std::uint64_t n = p * k;
  if (n == 0) return 0;
  return n * (n - 1) + n;
}

}  // namespace fatlab
