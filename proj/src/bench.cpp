#include "fatlab/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "fatlab/clusters.hpp"
#include "fatlab/dataset.hpp"
#include "fatlab/errors.hpp"
#include "fatlab/losses.hpp"

namespace fatlab {

std::string to_string(BenchLoss loss) {
  switch (loss) {
    case BenchLoss::kTripletBatchAll: return "tripletBatchAll";
    case BenchLoss::kTripletBatchHard: return "tripletBatchHard";
    case BenchLoss::kFat: return "FAT";
  }
  return "FAT";
}

BenchLoss parse_bench_loss(const std::string& tag) {
  if (tag == "tripletBatchAll") return BenchLoss::kTripletBatchAll;
  if (tag == "tripletBatchHard") return BenchLoss::kTripletBatchHard;
  if (tag == "FAT") return BenchLoss::kFat;
  throw ConfigError("unknown benchmark loss '" + tag + "' (expected tripletBatchAll | tripletBatchHard | FAT)");
}

double fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgumentError("slope fit needs >= 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw InvalidArgumentError("slope fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Workload {
  RowMatrix embeddings;
  std::vector<Label> labels;
};

Workload make_workload(std::size_t n, int k, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t p = n / static_cast<std::size_t>(k);
  Workload w;
  w.embeddings.resize(static_cast<Eigen::Index>(p * static_cast<std::size_t>(k)), dim);
  Eigen::Index row = 0;
  for (std::size_t id = 0; id < p; ++id) {
    Vector mean(dim);
    for (int c = 0; c < dim; ++c) mean[c] = 2.0 * gauss(rng);
    for (int j = 0; j < k; ++j, ++row) {
      for (int c = 0; c < dim; ++c) w.embeddings(row, c) = mean[c] + 0.5 * gauss(rng);
      w.labels.push_back(static_cast<Label>(id));
    }
  }
  return w;
}

// Samples are grouped by identity, so a group of G identities is a contiguous row block.
double fat_kernel(const Workload& w, int k, int group, double margin) {
  const ClusterSet clusters = compute_centroids(w.embeddings, w.labels, CentroidOption::kMean);
  LossConfig cfg;
  cfg.margin = margin;
  cfg.negative = NegativeStrategy::kCtrdHM;
  const Eigen::Index rows_per_group = static_cast<Eigen::Index>(group) * k;
  double total = 0.0;
  for (Eigen::Index start = 0; start < w.embeddings.rows(); start += rows_per_group) {
    const Eigen::Index len = std::min(rows_per_group, w.embeddings.rows() - start);
    const std::span<const Label> labels(w.labels.data() + start, static_cast<std::size_t>(len));
    ClusterSet local;
    for (Label l = labels.front(); l <= labels.back(); ++l) local.emplace(l, clusters.at(l));
    if (local.size() < 2) {
      // A trailing single-identity group borrows the previous identity as its negative.
      local.emplace(labels.front() - 1, clusters.at(labels.front() - 1));
    }
    const RowMatrix block = w.embeddings.middleRows(start, len);
    total += point_to_set_batch(block, labels, local, cfg, true).value;
  }
  return total;
}

double run_kernel(const BenchSpec& spec, const Workload& w) {
  switch (spec.loss) {
    case BenchLoss::kTripletBatchAll: return triplet_batch_all(w.embeddings, w.labels, spec.margin).value;
    case BenchLoss::kTripletBatchHard: return triplet_batch_hard(w.embeddings, w.labels, spec.margin).value;
    case BenchLoss::kFat: return fat_kernel(w, spec.per_identity, spec.group_identities, spec.margin);
  }
  return 0.0;
}

}  // namespace

BenchReport benchmark_loss_scaling(const BenchSpec& spec) {
  if (spec.sizes.size() < 2) throw ConfigError("benchmark needs at least two sizes");
  for (std::size_t i = 1; i < spec.sizes.size(); ++i) {
    if (spec.sizes[i] <= spec.sizes[i - 1]) throw ConfigError("benchmark sizes must be strictly increasing");
  }
  if (spec.repeats < 1) throw ConfigError("benchmark repeats must be >= 1");
  if (spec.per_identity < 2) throw ConfigError("benchmark per_identity must be >= 2");
  if (spec.group_identities < 2) throw ConfigError("benchmark group_identities must be >= 2");
  for (std::size_t n : spec.sizes) {
    if (n < 2 * static_cast<std::size_t>(spec.per_identity)) {
      throw ConfigError("benchmark size " + std::to_string(n) + " holds fewer than two identities");
    }
  }

  BenchReport report;
  report.loss = spec.loss;
  std::mt19937_64 rng(spec.seed);
  volatile double sink = 0.0;
  constexpr double kMinCallNs = 100e3;
  for (std::size_t n : spec.sizes) {
    const Workload w = make_workload(n, spec.per_identity, spec.embedding_dim, rng);
    auto t0 = Clock::now();
    sink = sink + run_kernel(spec, w);  // warm-up
    const double once = std::chrono::duration<double, std::nano>(Clock::now() - t0).count();

    std::size_t inner = 1;
    if (once < kMinCallNs) {
      inner = static_cast<std::size_t>(std::ceil(kMinCallNs / std::max(once, 1.0)));
      report.warnings.push_back("N=" + std::to_string(n) + ": single call below 100 us, using " +
                                std::to_string(inner) + " inner repeats");
    }
    std::vector<double> samples;
    for (int r = 0; r < spec.repeats; ++r) {
      t0 = Clock::now();
      for (std::size_t i = 0; i < inner; ++i) sink = sink + run_kernel(spec, w);
      samples.push_back(std::chrono::duration<double, std::nano>(Clock::now() - t0).count() /
                        static_cast<double>(inner));
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    const double sd = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
    report.points.push_back(BenchPoint{static_cast<std::size_t>(w.embeddings.rows()), mean, sd, inner});
  }
  std::vector<double> xs, ys;
  for (const auto& p : report.points) {
    xs.push_back(static_cast<double>(p.n));
    ys.push_back(p.mean_ns);
  }
  report.slope = fit_loglog_slope(xs, ys);
  return report;
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    points.push_back({{"n", p.n}, {"mean_ns", p.mean_ns}, {"std_ns", p.std_ns}, {"inner_repeats", p.inner_repeats}});
  }
  return {{"loss", to_string(report.loss)}, {"points", points}, {"slope", report.slope},
          {"warnings", report.warnings}};
}

void save_bench_table(const BenchReport& report, const std::string& path, const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write benchmark table '" + path + "'");
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "N,mean_ns,std_ns\n";
  for (const auto& p : report.points) {
    out << p.n << ',' << format_double(p.mean_ns) << ',' << format_double(p.std_ns) << '\n';
  }
}

}  // namespace fatlab
