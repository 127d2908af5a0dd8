#include "fatlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fatlab/errors.hpp"

namespace fatlab {

std::string to_string(LossSelector selector) {
  switch (selector) {
    case LossSelector::kCE: return "CE";
    case LossSelector::kTripletBatchAll: return "tripletBatchAll";
    case LossSelector::kTripletBatchHard: return "tripletBatchHard";
    case LossSelector::kCeFat: return "CE-FAT";
    case LossSelector::kCeFatNorm: return "CE-FATnorm";
    case LossSelector::kCeP2S: return "CE-P2S";
    case LossSelector::kCeP2SNorm: return "CE-P2Snorm";
  }
  return "CE";
}

LossSelector parse_loss_selector(const std::string& tag) {
  for (auto s : {LossSelector::kCE, LossSelector::kTripletBatchAll, LossSelector::kTripletBatchHard,
                 LossSelector::kCeFat, LossSelector::kCeFatNorm, LossSelector::kCeP2S,
                 LossSelector::kCeP2SNorm}) {
    if (tag == to_string(s)) return s;
  }
  throw ConfigError("unknown loss selector '" + tag +
                    "' (expected CE | tripletBatchAll | tripletBatchHard | CE-FAT | CE-FATnorm | "
                    "CE-P2S | CE-P2Snorm)");
}

bool uses_clusters(LossSelector s) {
  return s == LossSelector::kCeFat || s == LossSelector::kCeFatNorm || s == LossSelector::kCeP2S ||
         s == LossSelector::kCeP2SNorm;
}

bool uses_cross_entropy(LossSelector s) { return s == LossSelector::kCE || uses_clusters(s); }

bool is_normalized(LossSelector s) {
  return s == LossSelector::kCeFatNorm || s == LossSelector::kCeP2SNorm;
}

double LrSchedule::at(int epoch, int total_epochs) const {
  if (kind == Kind::kConstant) return base;
  const int boundary = static_cast<int>(decay_at * total_epochs);
  return epoch >= boundary ? base * decay : base;
}

void validate(const TrainConfig& config) {
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(config.lr.base >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(config.lr.decay > 0.0)) throw ConfigError("learning-rate decay must be > 0");
  validate(config.batch);
  if (uses_clusters(config.selector)) {
    validate(config.loss);
    if (is_normalized(config.selector) != config.loss.normalized) {
      throw ConfigError("loss selector " + to_string(config.selector) +
                        (config.loss.normalized ? " is unnormalized but normalized=true"
                                                : " is normalized but normalized=false"));
    }
  } else if (!(config.loss.margin > 0.0)) {
    throw ConfigError("margin must be > 0");
  }
  if ((config.selector == LossSelector::kTripletBatchAll ||
       config.selector == LossSelector::kTripletBatchHard) &&
      config.batch.per_identity < 2) {
    throw ConfigError("triplet losses need per_identity (K_b) >= 2");
  }
  if (config.threads < 1) throw ConfigError("threads must be >= 1");
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Checks everything the sampler and the loop rely on; fills default labels.
TrainingTargets checked_targets(const Network& net, const Dataset& data, const TrainConfig& config,
                                TrainingTargets targets) {
  validate(config);
  if (data.size() == 0) throw InvalidArgumentError("training set is empty");
  if (data.input_dim() != net.input_dim()) {
    throw InvalidArgumentError("dataset input dim " + std::to_string(data.input_dim()) +
                               " does not match model input dim " + std::to_string(net.input_dim()));
  }
  if (targets.labels.empty()) targets.labels = data.labels;
  if (targets.labels.size() != data.size()) throw InvalidArgumentError("target label count mismatch");
  for (Label l : targets.labels) {
    if (l < 0 || l >= net.num_classes()) {
      throw InvalidArgumentError("label " + std::to_string(l) + " outside the classifier's " +
                                 std::to_string(net.num_classes()) + " classes");
    }
  }
  if (targets.soft_targets.size() > 0 &&
      (static_cast<std::size_t>(targets.soft_targets.rows()) != data.size() ||
       targets.soft_targets.cols() != net.num_classes())) {
    throw InvalidArgumentError("soft target table shape mismatch");
  }
  if (!targets.centroid_member.empty() && targets.centroid_member.size() != data.size()) {
    throw InvalidArgumentError("centroid membership mask length mismatch");
  }
  if (!targets.centroid_weights.empty() && targets.centroid_weights.size() != data.size()) {
    throw InvalidArgumentError("centroid weight count mismatch");
  }
  return targets;
}

BatchSpec seeded_batch(const TrainConfig& config) {
  BatchSpec b = config.batch;
  b.seed = config.seed;
  return b;
}

}  // namespace

Trainer::Trainer(Network& net, const Dataset& data, TrainConfig config, TrainingTargets targets)
    : net_(net),
      data_(data),
      config_(config),
      targets_(checked_targets(net, data, config, std::move(targets))),
      sampler_(targets_.labels, seeded_batch(config)) {}

void Trainer::set_subset(std::span<const std::size_t> indices) { sampler_.set_subset(indices); }

void Trainer::refresh_clusters() {
  const RowMatrix emb = net_.embedding.forward(data_.features);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (targets_.centroid_member.empty() || targets_.centroid_member[i]) rows.push_back(i);
  }
  RowMatrix members(static_cast<Eigen::Index>(rows.size()), emb.cols());
  std::vector<Label> labels;
  std::vector<double> weights;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    members.row(static_cast<Eigen::Index>(r)) = emb.row(static_cast<Eigen::Index>(rows[r]));
    labels.push_back(targets_.labels[rows[r]]);
    if (!targets_.centroid_weights.empty()) weights.push_back(targets_.centroid_weights[rows[r]]);
  }
  clusters_ = compute_centroids(members, labels, config_.loss.centroid, weights);
  std::set<Label> wanted(targets_.labels.begin(), targets_.labels.end());
  dropped_ = 0;
  for (Label l : wanted) {
    if (!clusters_.contains(l)) ++dropped_;
  }
  ++log_.centroid_refreshes;
}

EpochRecord Trainer::run_epoch() {
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.lr = config_.lr.at(epoch_, config_.epochs);

  const auto t_refresh = Clock::now();
  if (uses_clusters(config_.selector)) {
    refresh_clusters();
    rec.dropped_clusters = dropped_;
  }
  rec.refresh_ms = ms_since(t_refresh);

  const auto t_steps = Clock::now();
  const auto batches = sampler_.next_epoch();
  std::size_t active = 0;
  std::size_t total = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    RowMatrix inputs(static_cast<Eigen::Index>(batch.size()), data_.features.cols());
    std::vector<Label> labels;
    RowMatrix soft;
    if (targets_.soft_targets.size() > 0) soft.resize(inputs.rows(), targets_.soft_targets.cols());
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      inputs.row(row) = data_.features.row(static_cast<Eigen::Index>(batch[r]));
      labels.push_back(targets_.labels[batch[r]]);
      if (soft.size() > 0) soft.row(row) = targets_.soft_targets.row(static_cast<Eigen::Index>(batch[r]));
    }
    const ForwardCache cache = forward_batch(net_, inputs);

    LossOutput metric;
    LossOutput ce;
    if (uses_cross_entropy(config_.selector)) {
      ce = soft.size() > 0 ? cross_entropy_batch(cache.logits, soft)
                           : cross_entropy_batch(cache.logits, labels);
    }
    LossOutput loss;
    switch (config_.selector) {
      case LossSelector::kCE:
        loss = ce;
        break;
      case LossSelector::kTripletBatchAll:
        loss = triplet_batch_all(cache.embeddings, labels, config_.loss.margin,
                                 config_.loss.average_active_only);
        break;
      case LossSelector::kTripletBatchHard:
        loss = triplet_batch_hard(cache.embeddings, labels, config_.loss.margin);
        break;
      case LossSelector::kCeFat:
      case LossSelector::kCeFatNorm:
      case LossSelector::kCeP2S:
      case LossSelector::kCeP2SNorm: {
        const bool with_radii =
            config_.selector == LossSelector::kCeFat || config_.selector == LossSelector::kCeFatNorm;
        metric = point_to_set_batch(cache.embeddings, labels, clusters_, config_.loss, with_radii);
        loss = hybrid_loss(metric, ce, config_.loss.lambda);
        break;
      }
    }
    if (!std::isfinite(loss.value)) {
      throw TrainingDivergenceError("non-finite loss at epoch " + std::to_string(epoch_) + ", batch " +
                                    std::to_string(b));
    }
    GradientBundle grads = backward(net_, cache, loss.embedding_grad, loss.logit_grad, config_.threads);
    try {
      sgd_step(net_, grads, rec.lr);
    } catch (const TrainingDivergenceError&) {
      throw TrainingDivergenceError("non-finite gradient at epoch " + std::to_string(epoch_) +
                                    ", batch " + std::to_string(b));
    }

    rec.loss += loss.value;
    rec.radii_term += loss.radii_term;
    if (config_.selector == LossSelector::kCE) {
      rec.ce_term += ce.value;
      rec.ce_weighted += ce.value;
    } else if (uses_clusters(config_.selector)) {
      rec.metric_term += metric.value - metric.radii_term;
      rec.ce_term += ce.value;
      rec.ce_weighted += config_.loss.lambda * ce.value;
    } else {
      rec.metric_term += loss.value;
    }
    active += loss.active_terms;
    total += loss.total_terms;
  }
  rec.batches = batches.size();
  const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
  rec.loss /= nb;
  rec.metric_term /= nb;
  rec.radii_term /= nb;
  rec.ce_term /= nb;
  rec.ce_weighted /= nb;
  rec.active_fraction = total == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(total);
  rec.step_ms = ms_since(t_steps);

  ++epoch_;
  log_.epochs.push_back(rec);
  return rec;
}

TrainResult train(Network model, const Dataset& data, const TrainConfig& config,
                  TrainingTargets targets) {
  Trainer trainer(model, data, config, std::move(targets));
  for (int e = 0; e < config.epochs; ++e) trainer.run_epoch();
  TrainLog log = trainer.log();
  return {std::move(model), std::move(log)};
}

RowMatrix embed_dataset(const Network& net, const Dataset& data) {
  if (data.size() == 0) return RowMatrix(0, net.embedding_dim());
  return net.embedding.forward(data.features);
}

void save_train_log(const TrainLog& log, const std::string& path, const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train log '" + path + "'");
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "epoch,lr,loss,metric_term,radii_term,ce_term,ce_weighted,active_fraction,batches,"
         "dropped_clusters\n";
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
        << format_double(r.metric_term) << ',' << format_double(r.radii_term) << ','
        << format_double(r.ce_term) << ',' << format_double(r.ce_weighted) << ','
        << format_double(r.active_fraction) << ',' << r.batches << ',' << r.dropped_clusters << '\n';
  }
}

void save_train_timing(const TrainLog& log, const std::string& path, const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write timing log '" + path + "'");
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "epoch,refresh_ms,step_ms\n";
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << format_double(r.refresh_ms) << ',' << format_double(r.step_ms) << '\n';
  }
}

}  // namespace fatlab
