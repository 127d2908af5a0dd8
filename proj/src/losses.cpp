#include "fatlab/losses.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>
#include <algorithm>

#include "fatlab/errors.hpp"

namespace fatlab {

void validate(const LossConfig& config) {
  if (!(config.margin > 0.0)) throw ConfigError("margin must be > 0");
  if (!(config.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (config.normalized && config.centroid == CentroidOption::kMean) {
    throw ConfigError("normalized loss requires centroid option C2, C3 or C4, got C1");
  }
  if (!config.normalized && config.centroid != CentroidOption::kMean) {
    throw ConfigError("unnormalized loss requires centroid option C1, got " +
                      to_string(config.centroid));
  }
}

namespace {

RowMatrix pairwise_distances(const RowMatrix& x) {
  const Eigen::Index n = x.rows();
  RowMatrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

void check_batch(const RowMatrix& embeddings, std::span<const Label> labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw InvalidArgumentError("loss: embedding rows and label count differ");
  }
}

// Distributes pair coefficients w(a,b) onto rows: grad_a += w u_ab, grad_b -= w u_ab,
// where u_ab is the unit vector from b to a.
void scatter_pair_gradients(const RowMatrix& x, const RowMatrix& dist, const RowMatrix& coeff,
                            RowMatrix& grad) {
  const Eigen::Index n = x.rows();
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double w = coeff(a, b);
      if (w == 0.0 || dist(a, b) == 0.0) continue;
      const auto u = (x.row(a) - x.row(b)) / dist(a, b);
      grad.row(a) += w * u;
      grad.row(b) -= w * u;
    }
  }
}

}  // namespace

LossOutput triplet_batch_all(const RowMatrix& embeddings, std::span<const Label> labels,
                             double margin, bool average_active_only) {
  check_batch(embeddings, labels);
  const Eigen::Index n = embeddings.rows();
  const RowMatrix dist = pairwise_distances(embeddings);
  RowMatrix coeff = RowMatrix::Zero(n, n);

  // Dense masked evaluation over all N^3 index triples, as in the usual
  // tensor formulation of batch-all.
  std::vector<double> same(static_cast<std::size_t>(n));
  double sum = 0.0;
  double valid_weight = 0.0;
  std::size_t active = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const Label ya = labels[static_cast<std::size_t>(a)];
    for (Eigen::Index j = 0; j < n; ++j) same[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(j)] == ya ? 1.0 : 0.0;
    const double* da = dist.row(a).data();
    double* ca = coeff.row(a).data();
    for (Eigen::Index p = 0; p < n; ++p) {
      const double pos = p == a ? 0.0 : same[static_cast<std::size_t>(p)];
      for (Eigen::Index q = 0; q < n; ++q) {
        const double w = pos * (1.0 - same[static_cast<std::size_t>(q)]);
        const double h = std::max(da[p] + margin - da[q], 0.0) * w;
        valid_weight += w;
        sum += h;
        if (h > 0.0) {
          ++active;
          ca[p] += 1.0;
          ca[q] -= 1.0;
        }
      }
    }
  }
  const auto valid = static_cast<std::size_t>(valid_weight);
  if (valid == 0) throw EmptyTripletSetError("batch contains no valid triplet");

  LossOutput out;
  out.total_terms = valid;
  out.active_terms = active;
  out.embedding_grad = RowMatrix::Zero(n, embeddings.cols());
  const std::size_t denom = average_active_only ? active : valid;
  if (denom == 0) return out;
  out.value = sum / static_cast<double>(denom);
  coeff /= static_cast<double>(denom);
  scatter_pair_gradients(embeddings, dist, coeff, out.embedding_grad);
  return out;
}

LossOutput triplet_batch_hard(const RowMatrix& embeddings, std::span<const Label> labels,
                              double margin) {
  check_batch(embeddings, labels);
  const Eigen::Index n = embeddings.rows();
  const RowMatrix dist = pairwise_distances(embeddings);
  RowMatrix coeff = RowMatrix::Zero(n, n);
  LossOutput out;
  out.embedding_grad = RowMatrix::Zero(n, embeddings.cols());
  double sum = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const Label ya = labels[static_cast<std::size_t>(a)];
    Eigen::Index hard_pos = -1;
    Eigen::Index hard_neg = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == ya) {
        if (hard_pos < 0 || dist(a, j) > dist(a, hard_pos)) hard_pos = j;
      } else if (hard_neg < 0 || dist(a, j) < dist(a, hard_neg)) {
        hard_neg = j;
      }
    }
    if (hard_pos < 0 || hard_neg < 0) {
      throw InvalidBatchError("anchor " + std::to_string(a) + " (identity " + std::to_string(ya) +
                              ") lacks a " + (hard_pos < 0 ? "positive" : "negative") +
                              " in the batch");
    }
    ++out.total_terms;
    const double h = dist(a, hard_pos) + margin - dist(a, hard_neg);
    if (h > 0.0) {
      sum += h;
      ++out.active_terms;
      coeff(a, hard_pos) += 1.0;
      coeff(a, hard_neg) -= 1.0;
    }
  }
  out.value = sum / static_cast<double>(n);
  coeff /= static_cast<double>(n);
  scatter_pair_gradients(embeddings, dist, coeff, out.embedding_grad);
  return out;
}

namespace {

LossOutput point_to_set(const Eigen::Ref<const Vector>& raw_anchor, const ClusterStats& own,
                        std::span<const ClusterStats> negatives, double margin, bool with_radii,
                        bool normalized) {
  if (negatives.empty()) throw MissingClusterError("point-to-set loss needs a negative cluster");
  Vector anchor = raw_anchor;
  double anchor_norm = 1.0;
  if (normalized) {
    anchor_norm = raw_anchor.norm();
    anchor = normalize(raw_anchor);
  }
  if (own.centroid.size() != anchor.size()) {
    throw InvalidArgumentError("anchor and centroid dimensions differ");
  }
  const double d_pos = euclidean_distance(anchor, own.centroid);
  const Vector g_pos = distance_gradient(anchor, own.centroid);

  LossOutput out;
  Vector grad = Vector::Zero(anchor.size());
  double hinge_sum = 0.0;
  double radius_sum = 0.0;
  for (const auto& neg : negatives) {
    const double h = d_pos + margin - euclidean_distance(anchor, neg.centroid);
    ++out.total_terms;
    if (h > 0.0) {
      hinge_sum += h;
      ++out.active_terms;
      grad += g_pos - distance_gradient(anchor, neg.centroid);
    }
    radius_sum += neg.radius;
  }
  const double k = static_cast<double>(negatives.size());
  if (with_radii) out.radii_term = own.radius + radius_sum / k;
  out.value = hinge_sum / k + out.radii_term;
  grad /= k;
  if (normalized) {
    // d(a/|a|)/da = (I - u u^T) / |a|
    grad = (grad - anchor * anchor.dot(grad)) / anchor_norm;
  }
  out.embedding_grad = grad.transpose();
  return out;
}

}  // namespace

LossOutput fat_loss(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                    std::span<const ClusterStats> negatives, double margin) {
  return point_to_set(anchor, own, negatives, margin, true, false);
}

LossOutput p2s_loss(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                    std::span<const ClusterStats> negatives, double margin) {
  return point_to_set(anchor, own, negatives, margin, false, false);
}

LossOutput fat_loss_normalized(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                               std::span<const ClusterStats> negatives, double margin) {
  return point_to_set(anchor, own, negatives, margin, true, true);
}

LossOutput p2s_loss_normalized(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                               std::span<const ClusterStats> negatives, double margin) {
  return point_to_set(anchor, own, negatives, margin, false, true);
}

LossOutput point_to_set_batch(const RowMatrix& embeddings, std::span<const Label> labels,
                              const ClusterSet& clusters, const LossConfig& config,
                              bool with_radii) {
  check_batch(embeddings, labels);
  const Eigen::Index n = embeddings.rows();
  LossOutput out;
  out.embedding_grad = RowMatrix::Zero(n, embeddings.cols());
  std::size_t used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Label y = labels[static_cast<std::size_t>(i)];
    auto own = clusters.find(y);
    if (own == clusters.end()) {
      ++out.skipped_anchors;
      continue;
    }
    const Vector a = embeddings.row(i).transpose();
    const Vector point = config.normalized ? normalize(a) : a;
    const auto negatives = select_negatives(y, point, clusters, labels, config.negative);
    const LossOutput term = point_to_set(a, own->second, negatives, config.margin, with_radii,
                                         config.normalized);
    out.value += term.value;
    out.radii_term += term.radii_term;
    out.active_terms += term.active_terms;
    out.total_terms += term.total_terms;
    out.embedding_grad.row(i) = term.embedding_grad.row(0);
    ++used;
  }
  if (used == 0) return out;
  const double k = static_cast<double>(used);
  out.value /= k;
  out.radii_term /= k;
  out.embedding_grad /= k;
  return out;
}

namespace {

double log_sum_exp(const Eigen::Ref<const Vector>& z) {
  const double mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

}  // namespace

LossOutput cross_entropy(const Eigen::Ref<const Vector>& logits, const Eigen::Ref<const Vector>& target) {
  if (target.size() != logits.size()) {
    throw InvalidArgumentError("cross_entropy: target has " + std::to_string(target.size()) +
                               " classes, logits have " + std::to_string(logits.size()));
  }
  check_probability_vector(target);
  const Vector p = softmax(logits);
  const double lse = log_sum_exp(logits);
  LossOutput out;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (target[i] > 0.0) out.value -= target[i] * (logits[i] - lse);
  }
  out.logit_grad = (p - target).transpose();
  out.total_terms = 1;
  out.active_terms = 1;
  return out;
}

LossOutput cross_entropy(const Eigen::Ref<const Vector>& logits, int target_class) {
  if (target_class < 0 || target_class >= logits.size()) {
    throw InvalidArgumentError("cross_entropy: class index " + std::to_string(target_class) +
                               " out of range for " + std::to_string(logits.size()) + " classes");
  }
  Vector t = Vector::Zero(logits.size());
  t[target_class] = 1.0;
  return cross_entropy(logits, t);
}

LossOutput cross_entropy_batch(const RowMatrix& logits, std::span<const Label> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw InvalidArgumentError("cross_entropy_batch: logits rows and target count differ");
  }
  LossOutput out;
  out.logit_grad = RowMatrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const LossOutput one = cross_entropy(logits.row(i).transpose(), targets[static_cast<std::size_t>(i)]);
    out.value += one.value;
    out.logit_grad.row(i) = one.logit_grad.row(0);
  }
  const auto n = static_cast<double>(std::max<Eigen::Index>(logits.rows(), 1));
  out.value /= n;
  out.logit_grad /= n;
  out.total_terms = out.active_terms = static_cast<std::size_t>(logits.rows());
  return out;
}

LossOutput cross_entropy_batch(const RowMatrix& logits, const RowMatrix& soft_targets) {
  if (logits.rows() != soft_targets.rows() || logits.cols() != soft_targets.cols()) {
    throw InvalidArgumentError("cross_entropy_batch: soft target shape mismatch");
  }
  LossOutput out;
  out.logit_grad = RowMatrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const LossOutput one = cross_entropy(logits.row(i).transpose(), soft_targets.row(i).transpose());
    out.value += one.value;
    out.logit_grad.row(i) = one.logit_grad.row(0);
  }
  const auto n = static_cast<double>(std::max<Eigen::Index>(logits.rows(), 1));
  out.value /= n;
  out.logit_grad /= n;
  out.total_terms = out.active_terms = static_cast<std::size_t>(logits.rows());
  return out;
}

LossOutput hybrid_loss(const LossOutput& metric, const LossOutput& ce, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgumentError("hybrid_loss: lambda must be >= 0");
  LossOutput out = metric;
  out.value = metric.value + lambda * ce.value;
  if (ce.logit_grad.size() > 0) {
    out.logit_grad = lambda * ce.logit_grad;
  }
  return out;
}

}  // namespace fatlab
