#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fatlab/core_math.hpp"

namespace fatlab {

/// The four centroid formulas:
///   kMean                        C1 = mean of features
///   kMeanOfNormalized            C2 = mean of normalized features
///   kNormalizedMean              C3 = normalize(sum of features)
///   kNormalizedMeanOfNormalized  C4 = normalize(sum of normalized features)
enum class CentroidOption { kMean, kMeanOfNormalized, kNormalizedMean, kNormalizedMeanOfNormalized };

std::string to_string(CentroidOption option);  // "C1".."C4"
CentroidOption parse_centroid_option(const std::string& tag);

/// True for every option except C1. Radii for these options are measured
/// between normalized members and the centroid.
bool uses_normalized_space(CentroidOption option);

struct ClusterStats {
  Label label = 0;
  Vector centroid;
  double radius = 0.0;
  std::size_t members = 0;
  std::size_t confident_members = 0;  // members with positive weight
};

/// Ordered by label, which is also the tie-break order for every argmin.
using ClusterSet = std::map<Label, ClusterStats>;

/// Max distance from any member to the centroid.
double compute_radius(std::span<const Vector> members, const Eigen::Ref<const Vector>& centroid);

/// Per-label centroid and radius. Rows of `features` are samples.
///
/// With weights, each centroid is the weighted generalization of its formula;
/// zero-weight members count toward `members` but take no part in the centroid
/// or the radius. `expected_labels`, when given, must all be present or
/// MissingClusterError is thrown. A label whose weights sum to zero raises
/// DegenerateClusterError, as does a C3/C4 sum with near-zero norm. For C2/C4
/// a near-zero-norm member raises DegenerateVectorError.
ClusterSet compute_centroids(const RowMatrix& features, std::span<const Label> labels,
                             CentroidOption option, std::span<const double> weights = {},
                             std::span<const Label> expected_labels = {});

}  // namespace fatlab
