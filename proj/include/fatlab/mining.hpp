#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fatlab/clusters.hpp"

namespace fatlab {

enum class NegativeStrategy { kCtrdAll, kCtrdAvg, kCtrdHM, kBatchNeg };

std::string to_string(NegativeStrategy strategy);
NegativeStrategy parse_negative_strategy(const std::string& tag);

/// Label carried by the synthetic cluster ctrdAvg returns.
inline constexpr Label kSyntheticLabel = -1;

/// Negative clusters for one anchor.
///
///   ctrdAll   every cluster whose label differs from the anchor's
///   ctrdAvg   one synthetic cluster: mean of those centroids, max of their radii
///   ctrdHM    the cluster whose centroid is nearest the anchor's own centroid
///   batchNeg  among labels in `batch_labels`, the cluster nearest `anchor_point`
///
/// `anchor_point` is the anchor embedding in the clusters' space (normalized
/// for the normalized loss); only batchNeg reads it. Argmin ties go to the
/// lowest label. Throws MissingClusterError when nothing is eligible.
std::vector<ClusterStats> select_negatives(Label anchor_label,
                                           const Eigen::Ref<const Vector>& anchor_point,
                                           const ClusterSet& clusters,
                                           std::span<const Label> batch_labels,
                                           NegativeStrategy strategy);

struct BatchSpec {
  int identities = 4;    // P_b
  int per_identity = 4;  // K_b
  std::uint64_t seed = 0;
};

void validate(const BatchSpec& spec);

using Batch = std::vector<std::size_t>;

/// Identity-balanced PK sampler. Every batch holds exactly P_b distinct
/// identities with K_b samples each, drawn from per-identity reshuffled
/// streams so an identity with fewer than K_b samples repeats some. One epoch
/// is max(ceil(P / P_b), ceil(N / (P_b * K_b))) batches and visits every
/// identity at least once.
class BatchSampler {
 public:
  BatchSampler(std::span<const Label> labels, BatchSpec spec);

  /// Restrict sampling to `indices` (empty restores the full set). Does not
  /// touch the generator state.
  void set_subset(std::span<const std::size_t> indices);

  std::vector<Batch> next_epoch();

  std::size_t identity_count() const { return members_.size(); }

 private:
  Label next_identity(const std::vector<Label>& taken);
  std::size_t next_member(Label label);

  std::vector<Label> labels_;
  BatchSpec spec_;
  std::mt19937_64 rng_;
  std::map<Label, std::vector<std::size_t>> members_;
  std::map<Label, std::deque<std::size_t>> member_streams_;
  std::deque<Label> identity_stream_;
  std::size_t eligible_ = 0;
};

}  // namespace fatlab
