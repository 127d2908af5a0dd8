#include "fatlab/clusters.hpp"

#include <algorithm>
#include <cmath>

#include "fatlab/errors.hpp"

namespace fatlab {

std::string to_string(CentroidOption option) {
  switch (option) {
    case CentroidOption::kMean: return "C1";
    case CentroidOption::kMeanOfNormalized: return "C2";
    case CentroidOption::kNormalizedMean: return "C3";
    case CentroidOption::kNormalizedMeanOfNormalized: return "C4";
  }
  return "C1";
}

CentroidOption parse_centroid_option(const std::string& tag) {
  if (tag == "C1") return CentroidOption::kMean;
  if (tag == "C2") return CentroidOption::kMeanOfNormalized;
  if (tag == "C3") return CentroidOption::kNormalizedMean;
  if (tag == "C4") return CentroidOption::kNormalizedMeanOfNormalized;
  throw ConfigError("unknown centroid option '" + tag + "' (expected C1 | C2 | C3 | C4)");
}

bool uses_normalized_space(CentroidOption option) { return option != CentroidOption::kMean; }

double compute_radius(std::span<const Vector> members, const Eigen::Ref<const Vector>& centroid) {
  if (members.empty()) throw InvalidArgumentError("compute_radius: empty member list");
  double r = 0.0;
  for (const auto& m : members) r = std::max(r, euclidean_distance(m, centroid));
  return r;
}

ClusterSet compute_centroids(const RowMatrix& features, std::span<const Label> labels,
                             CentroidOption option, std::span<const double> weights,
                             std::span<const Label> expected_labels) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) throw InvalidArgumentError("compute_centroids: label count mismatch");
  if (!weights.empty() && weights.size() != n) {
    throw InvalidArgumentError("compute_centroids: weight count mismatch");
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgumentError("compute_centroids: weights must be finite and non-negative");
    }
  }
  const bool normalize_members = option == CentroidOption::kMeanOfNormalized ||
                                 option == CentroidOption::kNormalizedMeanOfNormalized;
  const bool normalize_radius_space = uses_normalized_space(option);

  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  for (Label l : expected_labels) {
    if (!groups.contains(l)) {
      throw MissingClusterError("no members for identity " + std::to_string(l));
    }
  }

  ClusterSet out;
  const auto d = features.cols();
  for (const auto& [label, idx] : groups) {
    Vector sum = Vector::Zero(d);
    double total_weight = 0.0;
    std::size_t confident = 0;
    std::vector<Vector> space_members;  // members in the space the radius is measured in
    for (std::size_t i : idx) {
      const double w = weights.empty() ? 1.0 : weights[i];
      Vector x = features.row(static_cast<Eigen::Index>(i)).transpose();
      if (normalize_members) x = normalize(x);
      if (w > 0.0) {
        sum += w * x;
        total_weight += w;
        ++confident;
        space_members.push_back(normalize_radius_space && !normalize_members ? normalize(x) : x);
      }
    }
    if (!(total_weight > 0.0)) {
      throw DegenerateClusterError("identity " + std::to_string(label) + " has zero total weight");
    }
    ClusterStats stats;
    stats.label = label;
    stats.members = idx.size();
    stats.confident_members = confident;
    if (confident == 1) {
      // Every formula reduces to the lone member; renormalizing would cost an ulp.
      stats.centroid = space_members.front();
    } else if (option == CentroidOption::kMean || option == CentroidOption::kMeanOfNormalized) {
      stats.centroid = sum / total_weight;
    } else {
      if (!(sum.norm() > kNormEpsilon)) {
        throw DegenerateClusterError("identity " + std::to_string(label) +
                                     " has a degenerate pre-normalization mean");
      }
      stats.centroid = sum / sum.norm();
    }
    stats.radius = compute_radius(space_members, stats.centroid);
    out.emplace(label, std::move(stats));
  }
  return out;
}

}  // namespace fatlab
