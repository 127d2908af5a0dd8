#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include "fatlab/clusters.hpp"
#include "fatlab/core_math.hpp"
#include "fatlab/eval.hpp"
#include "fatlab/losses.hpp"
#include "fatlab/mining.hpp"
#include "fatlab/model.hpp"

namespace fatlab::testing {

inline RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

/// P identities of K points around random centres; labels grouped 0..P-1.
struct Clustered {
  RowMatrix points;
  std::vector<Label> labels;
};

inline Clustered clustered_points(int identities, int per_identity, int dim, std::mt19937_64& rng,
                                  double spread = 3.0, double noise = 1.0) {
  Clustered c;
  c.points.resize(identities * per_identity, dim);
  for (int p = 0; p < identities; ++p) {
    const Vector centre = random_vector(dim, rng, spread);
    for (int k = 0; k < per_identity; ++k) {
      const int row = p * per_identity + k;
      c.points.row(row) = (centre + random_vector(dim, rng, noise)).transpose();
      c.labels.push_back(p);
    }
  }
  return c;
}

// ---- parameter flattening for finite differences --------------------------

inline std::vector<double*> parameter_pointers(Network& net) {
  std::vector<double*> ptrs;
  for (auto& layer : net.embedding.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) ptrs.push_back(layer.weight.data() + i);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) ptrs.push_back(layer.bias.data() + i);
  }
  for (Eigen::Index i = 0; i < net.classifier.weight.size(); ++i) ptrs.push_back(net.classifier.weight.data() + i);
  for (Eigen::Index i = 0; i < net.classifier.bias.size(); ++i) ptrs.push_back(net.classifier.bias.data() + i);
  return ptrs;
}

inline std::vector<double> flatten(const GradientBundle& g) {
  std::vector<double> out;
  for (const auto& layer : g.embedding) {
    out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  out.insert(out.end(), g.classifier.weight.data(), g.classifier.weight.data() + g.classifier.weight.size());
  out.insert(out.end(), g.classifier.bias.data(), g.classifier.bias.data() + g.classifier.bias.size());
  return out;
}

/// ||a - b|| / max(||a||, ||b||); zero when both are (numerically) zero.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// Loss as a function of the network outputs on a fixed batch.
using OutputLoss = std::function<LossOutput(const RowMatrix& embeddings, const RowMatrix& logits)>;

struct GradientCheck {
  double parameter_error = 0.0;
  double input_error = 0.0;
  std::size_t parameters = 0;
};

/// Analytic parameter and input gradients of loss(forward(net, x)) against
/// central differences with step h.
inline GradientCheck check_gradients(Network net, const RowMatrix& x, const OutputLoss& loss, double h = 1e-5) {
  const ForwardCache cache = forward_batch(net, x);
  const LossOutput out = loss(cache.embeddings, cache.logits);
  const GradientBundle g = backward(net, cache, out.embedding_grad, out.logit_grad);
  const std::vector<double> analytic = flatten(g);

  auto value_at = [&](const Network& n, const RowMatrix& in) {
    const ForwardCache c = forward_batch(n, in);
    return loss(c.embeddings, c.logits).value;
  };

  std::vector<double*> ptrs = parameter_pointers(net);
  std::vector<double> numeric(ptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double saved = *ptrs[i];
    *ptrs[i] = saved + h;
    const double up = value_at(net, x);
    *ptrs[i] = saved - h;
    const double down = value_at(net, x);
    *ptrs[i] = saved;
    numeric[i] = (up - down) / (2.0 * h);
  }

  std::vector<double> analytic_in(g.input.data(), g.input.data() + g.input.size());
  std::vector<double> numeric_in(analytic_in.size());
  RowMatrix xp = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double saved = xp(r, c);
      xp(r, c) = saved + h;
      const double up = value_at(net, xp);
      xp(r, c) = saved - h;
      const double down = value_at(net, xp);
      xp(r, c) = saved;
      numeric_in[static_cast<std::size_t>(r * x.cols() + c)] = (up - down) / (2.0 * h);
    }
  }
  return {relative_error(analytic, numeric), relative_error(analytic_in, numeric_in), ptrs.size()};
}

struct NamedLoss {
  std::string name;
  OutputLoss loss;
};

/// Every loss in the library as a function of (embeddings, logits) on one
/// batch. Cluster statistics are frozen at the network's current embeddings,
/// as they are during training.
inline std::vector<NamedLoss> gradient_suite(const Network& net, const RowMatrix& x, const std::vector<Label>& labels,
                                            std::mt19937_64& rng) {
  const RowMatrix emb = net.embedding.forward(x);
  const ClusterSet raw = compute_centroids(emb, labels, CentroidOption::kMean);
  const ClusterSet unit = compute_centroids(emb, labels, CentroidOption::kNormalizedMeanOfNormalized);
  LossConfig plain;
  plain.margin = 1.0;
  LossConfig norm;
  norm.margin = 0.1;
  norm.normalized = true;
  norm.centroid = CentroidOption::kNormalizedMeanOfNormalized;

  RowMatrix soft(x.rows(), net.num_classes());
  for (Eigen::Index i = 0; i < soft.rows(); ++i) {
    soft.row(i) = softmax(random_vector(net.num_classes(), rng, 2.0)).transpose();
  }
  const double lambda = 0.7;

  std::vector<NamedLoss> out;
  out.push_back({"triplet batch-all", [=](const RowMatrix& e, const RowMatrix&) {
                   return triplet_batch_all(e, labels, 1.0);
                 }});
  out.push_back({"triplet batch-hard", [=](const RowMatrix& e, const RowMatrix&) {
                   return triplet_batch_hard(e, labels, 1.0);
                 }});
  for (auto strategy : {NegativeStrategy::kBatchNeg, NegativeStrategy::kCtrdAll}) {
    LossConfig cfg = plain;
    cfg.negative = strategy;
    const std::string tag = " (" + to_string(strategy) + ")";
    out.push_back({"P2S" + tag, [=](const RowMatrix& e, const RowMatrix&) {
                     return point_to_set_batch(e, labels, raw, cfg, false);
                   }});
    out.push_back({"FAT" + tag, [=](const RowMatrix& e, const RowMatrix&) {
                     return point_to_set_batch(e, labels, raw, cfg, true);
                   }});
  }
  out.push_back({"FATnorm", [=](const RowMatrix& e, const RowMatrix&) {
                   return point_to_set_batch(e, labels, unit, norm, true);
                 }});
  out.push_back({"P2Snorm", [=](const RowMatrix& e, const RowMatrix&) {
                   return point_to_set_batch(e, labels, unit, norm, false);
                 }});
  out.push_back({"CE hard", [=](const RowMatrix&, const RowMatrix& z) { return cross_entropy_batch(z, labels); }});
  out.push_back({"CE soft", [=](const RowMatrix&, const RowMatrix& z) { return cross_entropy_batch(z, soft); }});
  out.push_back({"CE-FAT hybrid", [=](const RowMatrix& e, const RowMatrix& z) {
                   return hybrid_loss(point_to_set_batch(e, labels, raw, plain, true), cross_entropy_batch(z, labels),
                                      lambda);
                 }});
  out.push_back({"CE-FATnorm hybrid (soft)", [=](const RowMatrix& e, const RowMatrix& z) {
                   return hybrid_loss(point_to_set_batch(e, labels, unit, norm, true), cross_entropy_batch(z, soft),
                                      lambda);
                 }});
  return out;
}

// ---- independent oracles ---------------------------------------------------

/// Retrieval metrics by explicit O(Q * G^2) rank counting: the rank of gallery
/// item j is the number of items strictly closer, plus the closer-or-equal
/// items with a smaller index.
inline EvalReport brute_force_retrieval(const RowMatrix& query, const std::vector<Label>& ql,
                                        const RowMatrix& gallery, const std::vector<Label>& gl) {
  EvalReport r;
  double t1 = 0, t5 = 0, t10 = 0, ap_sum = 0;
  const Eigen::Index G = gallery.rows();
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    std::vector<double> d(static_cast<std::size_t>(G));
    for (Eigen::Index j = 0; j < G; ++j) {
      double s = 0;
      for (Eigen::Index c = 0; c < query.cols(); ++c) s += (query(q, c) - gallery(j, c)) * (query(q, c) - gallery(j, c));
      d[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    std::vector<std::size_t> match_ranks;
    for (Eigen::Index j = 0; j < G; ++j) {
      if (gl[static_cast<std::size_t>(j)] != ql[static_cast<std::size_t>(q)]) continue;
      std::size_t rank = 1;
      for (Eigen::Index k = 0; k < G; ++k) {
        const double dk = d[static_cast<std::size_t>(k)], dj = d[static_cast<std::size_t>(j)];
        if (dk < dj || (dk == dj && k < j)) ++rank;
      }
      match_ranks.push_back(rank);
    }
    if (match_ranks.empty()) {
      ++r.skipped;
      continue;
    }
    std::sort(match_ranks.begin(), match_ranks.end());
    ++r.queries;
    t1 += match_ranks.front() <= 1;
    t5 += match_ranks.front() <= 5;
    t10 += match_ranks.front() <= 10;
    double ap = 0;
    for (std::size_t i = 0; i < match_ranks.size(); ++i) ap += static_cast<double>(i + 1) / static_cast<double>(match_ranks[i]);
    ap_sum += ap / static_cast<double>(match_ranks.size());
  }
  if (r.queries > 0) {
    const double n = static_cast<double>(r.queries);
    r.top1 = t1 / n;
    r.top5 = t5 / n;
    r.top10 = t10 / n;
    r.mean_ap = ap_sum / n;
  }
  return r;
}

struct Triplet {
  std::size_t a, p, n;
};

inline std::vector<Triplet> enumerate_triplets(const std::vector<Label>& labels) {
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t p = 0; p < labels.size(); ++p)
      for (std::size_t n = 0; n < labels.size(); ++n)
        if (p != a && labels[p] == labels[a] && labels[n] != labels[a]) out.push_back({a, p, n});
  return out;
}

inline double naive_distance(const RowMatrix& x, std::size_t i, std::size_t j) {
  double s = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double d = x(static_cast<Eigen::Index>(i), c) - x(static_cast<Eigen::Index>(j), c);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Batch-all triplet loss straight from the listed triplets.
inline double triplet_oracle(const RowMatrix& x, const std::vector<Label>& labels, double m) {
  const auto ts = enumerate_triplets(labels);
  double s = 0;
  for (const auto& t : ts) s += std::max(0.0, naive_distance(x, t.a, t.p) + m - naive_distance(x, t.a, t.n));
  return s / static_cast<double>(ts.size());
}

}  // namespace fatlab::testing
