#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fatlab/clusters.hpp"
#include "fatlab/dataset.hpp"
#include "fatlab/losses.hpp"
#include "fatlab/mining.hpp"
#include "fatlab/model.hpp"

namespace fatlab {

enum class LossSelector {
  kCE,
  kTripletBatchAll,
  kTripletBatchHard,
  kCeFat,
  kCeFatNorm,
  kCeP2S,
  kCeP2SNorm,
};

std::string to_string(LossSelector selector);
LossSelector parse_loss_selector(const std::string& tag);

bool uses_clusters(LossSelector selector);
bool uses_cross_entropy(LossSelector selector);
bool is_normalized(LossSelector selector);

struct LrSchedule {
  enum class Kind { kConstant, kStepDecay };
  Kind kind = Kind::kStepDecay;
  double base = 0.05;
  double decay = 0.1;
  double decay_at = 2.0 / 3.0;  // fraction of total epochs

  double at(int epoch, int total_epochs) const;
};

struct TrainConfig {
  int epochs = 50;
  LrSchedule lr;
  LossConfig loss;
  BatchSpec batch{10, 4, 0};
  std::uint64_t seed = 0;
  LossSelector selector = LossSelector::kCeFat;
  int threads = 1;
};

/// Throws ConfigError on invalid settings, including a normalization flag
/// that disagrees with the selector.
void validate(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;         // mean total batch loss
  double metric_term = 0.0;  // hinge part of the metric loss (P2S or triplet)
  double radii_term = 0.0;   // compactness contribution, no gradient
  double ce_term = 0.0;      // unweighted cross-entropy
  double ce_weighted = 0.0;  // lambda * ce_term as it enters the loss
  double active_fraction = 0.0;
  std::size_t batches = 0;
  std::size_t dropped_clusters = 0;
  double refresh_ms = 0.0;
  double step_ms = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t centroid_refreshes = 0;
};

/// What the network is fitted to. Empty members fall back to the dataset:
/// labels -> dataset labels, soft targets -> one-hot labels, centroid mask ->
/// every sample, centroid weights -> uniform.
struct TrainingTargets {
  std::vector<Label> labels;
  RowMatrix soft_targets;
  std::vector<char> centroid_member;
  std::vector<double> centroid_weights;
};

/// Epoch-at-a-time training loop. Each epoch refreshes the cluster
/// statistics over current embeddings (cluster-based selectors only), then
/// runs one SGD step per sampled batch.
class Trainer {
 public:
  Trainer(Network& net, const Dataset& data, TrainConfig config, TrainingTargets targets = {});

  /// Restrict batch sampling to these sample indices (empty = all).
  void set_subset(std::span<const std::size_t> indices);

  EpochRecord run_epoch();

  int epochs_done() const { return epoch_; }
  const TrainLog& log() const { return log_; }
  const ClusterSet& clusters() const { return clusters_; }

 private:
  void refresh_clusters();

  Network& net_;
  const Dataset& data_;
  TrainConfig config_;
  TrainingTargets targets_;
  BatchSampler sampler_;
  ClusterSet clusters_;
  std::size_t dropped_ = 0;
  int epoch_ = 0;
  TrainLog log_;
};

struct TrainResult {
  Network model;
  TrainLog log;
};

TrainResult train(Network model, const Dataset& data, const TrainConfig& config,
                  TrainingTargets targets = {});

/// forward() over every sample, rows in dataset order.
RowMatrix embed_dataset(const Network& net, const Dataset& data);

/// One record per epoch: deterministic columns only. Wall times go to
/// save_train_timing so the log itself is byte-reproducible.
void save_train_log(const TrainLog& log, const std::string& path, const nlohmann::json& config);
void save_train_timing(const TrainLog& log, const std::string& path, const nlohmann::json& config);

}  // namespace fatlab
