#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fatlab/core_math.hpp"

namespace fatlab {

/// Feature vectors with identity labels. `clean_labels` is empty unless the
/// ground truth is known (synthetic data).
struct Dataset {
  RowMatrix features;
  std::vector<Label> labels;
  std::vector<Label> clean_labels;
  std::vector<std::size_t> ids;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int input_dim() const { return static_cast<int>(features.cols()); }
  bool has_clean_labels() const { return !clean_labels.empty(); }
  /// Ground-truth labels when known, otherwise the observed ones.
  const std::vector<Label>& reference_labels() const {
    return has_clean_labels() ? clean_labels : labels;
  }

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws InvalidArgumentError if shapes disagree or a label is outside [0, C).
  void validate() const;
};

enum class Provenance { kClean, kFlip, kOutlier, kMixture };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& tag);

struct HoldoutSplit {
  Dataset train;
  Dataset query;
};

/// Per identity (by reference label, in sample order) the last
/// `queries_per_identity` samples become queries; identities with no more
/// samples than that stay entirely in train.
HoldoutSplit split_holdout(const Dataset& data, int queries_per_identity);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Native text format:
///   # config: {...}            optional, any number of '#' lines
///   fatlab-dataset 1
///   N d_in C has_clean
///   id label [clean_label] x_1 ... x_d      one line per sample
void save_dataset(const Dataset& data, const std::string& path, const nlohmann::json& config);

/// Reads the native format, or a delimited variant when the path ends in
/// .csv: header `id,label[,clean_label],f0,...` followed by one row per sample.
Dataset load_dataset(const std::string& path);

void save_provenance(std::span<const Provenance> mask, std::span<const std::size_t> ids,
                     const std::string& path, const nlohmann::json& config);
std::vector<Provenance> load_provenance(const std::string& path);

/// The JSON object on a leading `# config: ` line, or null if there is none.
nlohmann::json read_embedded_config(const std::string& path);

}  // namespace fatlab
