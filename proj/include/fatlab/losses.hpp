#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "fatlab/clusters.hpp"
#include "fatlab/core_math.hpp"
#include "fatlab/mining.hpp"

namespace fatlab {

struct LossConfig {
  double margin = 1.0;
  double lambda = 1.0;
  bool normalized = false;
  CentroidOption centroid = CentroidOption::kMean;
  NegativeStrategy negative = NegativeStrategy::kBatchNeg;
  /// Batch-all triplet only: average over active triplets instead of all valid ones.
  bool average_active_only = false;
};

/// Throws ConfigError on m <= 0, lambda < 0, or a normalization flag that does
/// not match the centroid option (C1 iff unnormalized).
void validate(const LossConfig& config);

/// Loss value plus gradients. `embedding_grad` rows match the embeddings the
/// loss was evaluated on; `logit_grad` is empty unless a cross-entropy part is
/// present.
struct LossOutput {
  double value = 0.0;
  RowMatrix embedding_grad;
  RowMatrix logit_grad;
  std::size_t active_terms = 0;
  std::size_t total_terms = 0;
  /// Compactness contribution R(a) + R(n) included in `value` (zero for P2S
  /// and triplet losses). Carries no gradient.
  double radii_term = 0.0;
  /// Anchors skipped because their identity had no cluster.
  std::size_t skipped_anchors = 0;

  double active_fraction() const {
    return total_terms == 0 ? 0.0 : static_cast<double>(active_terms) / static_cast<double>(total_terms);
  }
};

/// Mean of max{d(a,p) + m - d(a,n), 0} over every valid (a, p, n) in the batch.
/// Evaluated densely over all N^3 index triples with a validity mask.
LossOutput triplet_batch_all(const RowMatrix& embeddings, std::span<const Label> labels,
                             double margin, bool average_active_only = false);

/// Per anchor: hardest (farthest) positive and hardest (nearest) negative.
LossOutput triplet_batch_hard(const RowMatrix& embeddings, std::span<const Label> labels,
                              double margin);

/// Single-anchor point-to-set losses. Centroids and radii are constants, so
/// the gradient only reaches the anchor (a 1 x d row).
///
///   fat       mean_n [ max{0, d(a,c_a) + m - d(a,c_n)} + R(a) + R(n) ]
///   p2s       the same without R(a) + R(n)
///   *_normalized  evaluated at a/||a|| against normalized-space clusters
LossOutput fat_loss(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                    std::span<const ClusterStats> negatives, double margin);
LossOutput p2s_loss(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                    std::span<const ClusterStats> negatives, double margin);
LossOutput fat_loss_normalized(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                               std::span<const ClusterStats> negatives, double margin);
LossOutput p2s_loss_normalized(const Eigen::Ref<const Vector>& anchor, const ClusterStats& own,
                               std::span<const ClusterStats> negatives, double margin);

/// Mean point-to-set loss over all anchors of a batch, negatives chosen by
/// config.negative. Anchors whose identity is absent from `clusters` are
/// skipped and counted.
LossOutput point_to_set_batch(const RowMatrix& embeddings, std::span<const Label> labels,
                              const ClusterSet& clusters, const LossConfig& config,
                              bool with_radii);

/// -sum_i t_i ln softmax(z)_i with gradient softmax(z) - t (single sample).
LossOutput cross_entropy(const Eigen::Ref<const Vector>& logits, const Eigen::Ref<const Vector>& target);
LossOutput cross_entropy(const Eigen::Ref<const Vector>& logits, int target_class);

/// Batch means; gradients are divided by the batch size.
LossOutput cross_entropy_batch(const RowMatrix& logits, std::span<const Label> targets);
LossOutput cross_entropy_batch(const RowMatrix& logits, const RowMatrix& soft_targets);

/// value = fat.value + lambda * ce.value; embedding gradient from the metric
/// part, logit gradient scaled by lambda.
LossOutput hybrid_loss(const LossOutput& metric, const LossOutput& ce, double lambda);

}  // namespace fatlab
