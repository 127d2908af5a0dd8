#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fatlab/dataset.hpp"
#include "fatlab/model.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

struct SyntheticSpec {
  int identities = 20;    // P
  int per_identity = 10;  // K
  int input_dim = 32;
  double separation = 10.0;
  std::uint64_t seed = 0;
};

/// Identity i draws its samples from N(separation * u_i, I) with u_i a random
/// unit direction. Samples are grouped by identity; clean labels are recorded.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec);

struct NoiseSpec {
  double flip_rate = 0.0;
  double outlier_rate = 0.0;
  double mixture_rate = 0.0;
  std::uint64_t seed = 0;
};

void validate(const NoiseSpec& spec);

struct NoisyDataset {
  Dataset data;
  std::vector<Provenance> provenance;
};

/// Corrupts round(rate * N) distinct samples per noise kind:
///   flip     label replaced by a uniformly chosen different label
///   outlier  feature replaced by a far off-manifold point, label kept
///   mixture  feature replaced by the midpoint with a sample of another identity
NoisyDataset inject_noise(const Dataset& data, const NoiseSpec& spec);

/// Fraction of indices (or of all samples when `indices` is empty) whose
/// provenance is not clean.
double corruption_rate(std::span<const Provenance> provenance, std::span<const std::size_t> indices = {});

enum class SelectionKind { kWholeSet, kHardThreshold, kSoftThreshold, kHardPercentage, kSoftPercentage };

std::string to_string(SelectionKind kind);
SelectionKind parse_selection_kind(const std::string& tag);

/// Which per-sample number drives selection: entropy of the prediction, or
/// cross-entropy against the observed label.
enum class SelectionStatistic { kEntropy, kCrossEntropy };

std::string to_string(SelectionStatistic statistic);
SelectionStatistic parse_selection_statistic(const std::string& tag);

struct SelectionMode {
  SelectionKind kind = SelectionKind::kSoftPercentage;
  double threshold = 0.1;
  double hard_fraction = 0.5;         // hardPercentage
  double soft_base_fraction = 0.25;   // softPercentage: lowest-statistic share
  double soft_extra_fraction = 1.0 / 3.0;  // softPercentage: random share of the rest
  double soft_threshold_extra = 0.5;  // softThreshold: random share of the rest
  SelectionStatistic statistic = SelectionStatistic::kEntropy;
};

void validate(const SelectionMode& mode);

/// Sorted trusted indices. Throws EmptyTrustedSetError when nothing is selected.
///   hardThreshold   {i : s_i < t}
///   softThreshold   {i : s_i < t/2} plus a seeded 50% of the rest
///   hardPercentage  the floor(N/2) lowest (ties by index)
///   softPercentage  the floor(N/4) lowest plus a seeded floor(rest/3) of the rest
std::vector<std::size_t> select_confident(std::span<const double> statistic, const SelectionMode& mode,
                                          std::uint64_t seed);

/// Per-sample selection statistic under the network's current predictions.
std::vector<double> selection_statistic(const Network& net, const Dataset& data,
                                        SelectionStatistic statistic);

struct TeacherConfig {
  TrainConfig train;  // selector must be CE; train.epochs is the total
  SelectionMode mode;
  int cycle_epochs = 5;
};

struct SelectionRecord {
  int epoch = 0;  // first epoch trained on this selection; total epochs for the final one
  std::vector<std::size_t> indices;  // what the rule selected, possibly empty
  /// The selection was empty or spanned too few identities for a batch, so
  /// the cycle trained on the full set. A final fallback trusts every sample.
  bool fell_back = false;
};

struct TeacherResult {
  Network teacher;
  std::vector<std::size_t> trusted;  // final selection
  std::vector<SelectionRecord> selections;
  TrainLog log;
};

/// Self-bootstrapped CE teacher. The first cycle uses every sample; before
/// each later cycle the trusted subset is reselected from current
/// predictions and the cycle trains on it only. A final reselection after
/// the last epoch gives `trusted`. kWholeSet never reselects.
TeacherResult train_teacher(Network model, const Dataset& noisy, const TeacherConfig& config);

struct SoftLabelTable {
  std::vector<std::size_t> ids;
  RowMatrix probabilities;  // one row per sample
  std::vector<double> confidence;  // 1 - H / ln C
  std::vector<char> trusted;

  std::size_t size() const { return ids.size(); }
  std::vector<Label> argmax_labels() const;
};

SoftLabelTable generate_soft_labels(const Network& teacher, const Dataset& data,
                                    std::span<const std::size_t> trusted);

/// Delimited file: id,trusted,confidence,p0..p{C-1}.
void save_soft_labels(const SoftLabelTable& table, const std::string& path, const nlohmann::json& config);
SoftLabelTable load_soft_labels(const std::string& path);

/// CE-FAT (or CE-FATnorm) on soft labels. Anchors use the argmax class;
/// centroids come from trusted samples only, weighted by confidence; the CE
/// term targets the soft labels of every sample.
TrainResult train_student(Network model, const Dataset& data, const SoftLabelTable& soft,
                          const TrainConfig& config);

}  // namespace fatlab
