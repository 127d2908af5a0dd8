#include "fatlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fatlab/errors.hpp"

namespace fatlab {

Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.identities < 2 || spec.per_identity < 2) {
    throw InvalidArgumentError("synthetic dataset needs P >= 2 and K >= 2");
  }
  if (spec.input_dim < 1) throw InvalidArgumentError("synthetic dataset needs input_dim >= 1");
  if (!(spec.separation >= 0.0)) throw InvalidArgumentError("separation must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(spec.identities) * spec.per_identity;
  Dataset data;
  data.num_classes = spec.identities;
  data.features.resize(n, spec.input_dim);
  Eigen::Index row = 0;
  for (int id = 0; id < spec.identities; ++id) {
    Vector dir(spec.input_dim);
    do {
      for (int c = 0; c < spec.input_dim; ++c) dir[c] = gauss(rng);
    } while (dir.norm() <= kNormEpsilon);
    const Vector mean = spec.separation * dir.normalized();
    for (int k = 0; k < spec.per_identity; ++k, ++row) {
      for (int c = 0; c < spec.input_dim; ++c) data.features(row, c) = mean[c] + gauss(rng);
      data.labels.push_back(id);
      data.clean_labels.push_back(id);
      data.ids.push_back(static_cast<std::size_t>(row));
    }
  }
  return data;
}

void validate(const NoiseSpec& spec) {
  for (double r : {spec.flip_rate, spec.outlier_rate, spec.mixture_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise rates must lie in [0, 1]");
  }
  if (spec.flip_rate + spec.outlier_rate + spec.mixture_rate > 1.0 + 1e-12) {
    throw ConfigError("noise rates must sum to at most 1");
  }
}

NoisyDataset inject_noise(const Dataset& data, const NoiseSpec& spec) {
  validate(spec);
  NoisyDataset out{data, std::vector<Provenance>(data.size(), Provenance::kClean)};
  const std::size_t n = data.size();
  if (n == 0) return out;
  if (!out.data.has_clean_labels()) out.data.clean_labels = data.labels;

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto count = [n](double rate) { return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))); };
  const std::size_t n_flip = count(spec.flip_rate);
  const std::size_t n_outlier = std::min(count(spec.outlier_rate), n - n_flip);
  const std::size_t n_mix = std::min(count(spec.mixture_rate), n - n_flip - n_outlier);

  std::vector<Label> present(data.labels.begin(), data.labels.end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  std::size_t cursor = 0;
  for (std::size_t k = 0; k < n_flip; ++k) {
    const std::size_t i = order[cursor++];
    if (present.size() < 2) break;
    std::uniform_int_distribution<std::size_t> pick(0, present.size() - 2);
    std::size_t j = pick(rng);
    // Skip over the current label so every other label is equally likely.
    const auto cur = std::lower_bound(present.begin(), present.end(), data.labels[i]) - present.begin();
    if (j >= static_cast<std::size_t>(cur)) ++j;
    out.data.labels[i] = present[j];
    out.provenance[i] = Provenance::kFlip;
  }

  double max_norm = 0.0;
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) max_norm = std::max(max_norm, data.features.row(r).norm());
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto d = data.features.cols();
  for (std::size_t k = 0; k < n_outlier; ++k) {
    const std::size_t i = order[cursor++];
    Vector dir(d);
    do {
      for (Eigen::Index c = 0; c < d; ++c) dir[c] = gauss(rng);
    } while (dir.norm() <= kNormEpsilon);
    out.data.features.row(static_cast<Eigen::Index>(i)) = (3.0 * std::max(max_norm, 1.0)) * dir.normalized().transpose();
    out.provenance[i] = Provenance::kOutlier;
  }

  const auto& ref = out.data.clean_labels;
  std::uniform_int_distribution<std::size_t> any(0, n - 1);
  for (std::size_t k = 0; k < n_mix; ++k) {
    const std::size_t i = order[cursor++];
    if (present.size() < 2) break;
    std::size_t j = any(rng);
    while (ref[j] == ref[i]) j = any(rng);
    out.data.features.row(static_cast<Eigen::Index>(i)) =
        0.5 * (data.features.row(static_cast<Eigen::Index>(i)) + data.features.row(static_cast<Eigen::Index>(j)));
    out.provenance[i] = Provenance::kMixture;
  }
  return out;
}

double corruption_rate(std::span<const Provenance> provenance, std::span<const std::size_t> indices) {
  std::size_t bad = 0;
  std::size_t total = 0;
  if (indices.empty()) {
    for (auto p : provenance) bad += p != Provenance::kClean;
    total = provenance.size();
  } else {
    for (std::size_t i : indices) {
      if (i >= provenance.size()) throw InvalidArgumentError("corruption_rate: index out of range");
      bad += provenance[i] != Provenance::kClean;
    }
    total = indices.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(total);
}

std::string to_string(SelectionKind kind) {
  switch (kind) {
    case SelectionKind::kWholeSet: return "wholeSet";
    case SelectionKind::kHardThreshold: return "hardThreshold";
    case SelectionKind::kSoftThreshold: return "softThreshold";
    case SelectionKind::kHardPercentage: return "hardPercentage";
    case SelectionKind::kSoftPercentage: return "softPercentage";
  }
  return "wholeSet";
}

SelectionKind parse_selection_kind(const std::string& tag) {
  for (auto k : {SelectionKind::kWholeSet, SelectionKind::kHardThreshold, SelectionKind::kSoftThreshold,
                 SelectionKind::kHardPercentage, SelectionKind::kSoftPercentage}) {
    if (tag == to_string(k)) return k;
  }
  throw ConfigError("unknown selection mode '" + tag +
                    "' (expected wholeSet | hardThreshold | softThreshold | hardPercentage | softPercentage)");
}

std::string to_string(SelectionStatistic statistic) {
  return statistic == SelectionStatistic::kEntropy ? "entropy" : "crossEntropy";
}

SelectionStatistic parse_selection_statistic(const std::string& tag) {
  if (tag == "entropy") return SelectionStatistic::kEntropy;
  if (tag == "crossEntropy") return SelectionStatistic::kCrossEntropy;
  throw ConfigError("unknown selection statistic '" + tag + "' (expected entropy | crossEntropy)");
}

void validate(const SelectionMode& mode) {
  if (!(mode.threshold > 0.0)) throw ConfigError("selection threshold must be > 0");
  for (double f : {mode.hard_fraction, mode.soft_base_fraction, mode.soft_extra_fraction,
                   mode.soft_threshold_extra}) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("selection fractions must lie in (0, 1]");
  }
}

namespace {

std::size_t floor_count(double fraction, std::size_t n) {
  // The small slack keeps e.g. (1/3) * 75 from flooring to 24.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> by_statistic(std::span<const double> s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  return order;
}

// Adds a seeded random `count` of `pool` to `chosen`.
void add_random(std::vector<std::size_t> pool, std::size_t count, std::uint64_t seed,
                std::vector<std::size_t>& chosen) {
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(count, pool.size())));
}

}  // namespace

std::vector<std::size_t> select_confident(std::span<const double> statistic, const SelectionMode& mode,
                                          std::uint64_t seed) {
  validate(mode);
  for (double v : statistic) {
    if (!std::isfinite(v)) throw InvalidArgumentError("select_confident: non-finite statistic");
  }
  const std::size_t n = statistic.size();
  std::vector<std::size_t> chosen;
  switch (mode.kind) {
    case SelectionKind::kWholeSet:
      chosen.resize(n);
      std::iota(chosen.begin(), chosen.end(), 0);
      break;
    case SelectionKind::kHardThreshold:
      for (std::size_t i = 0; i < n; ++i) {
        if (statistic[i] < mode.threshold) chosen.push_back(i);
      }
      break;
    case SelectionKind::kSoftThreshold: {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        (statistic[i] < mode.threshold / 2.0 ? chosen : rest).push_back(i);
      }
      add_random(rest, floor_count(mode.soft_threshold_extra, rest.size()), seed, chosen);
      break;
    }
    case SelectionKind::kHardPercentage: {
      const auto order = by_statistic(statistic);
      chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(floor_count(mode.hard_fraction, n)));
      break;
    }
    case SelectionKind::kSoftPercentage: {
      const auto order = by_statistic(statistic);
      const std::size_t base = floor_count(mode.soft_base_fraction, n);
      chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(base));
      std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(base), order.end());
      std::sort(rest.begin(), rest.end());
      add_random(rest, floor_count(mode.soft_extra_fraction, rest.size()), seed, chosen);
      break;
    }
  }
  if (chosen.empty()) throw EmptyTrustedSetError("confident-sample selection is empty");
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<double> selection_statistic(const Network& net, const Dataset& data,
                                        SelectionStatistic statistic) {
  const ForwardCache cache = forward_batch(net, data.features);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector logits = cache.logits.row(static_cast<Eigen::Index>(i)).transpose();
    if (statistic == SelectionStatistic::kEntropy) {
      out[i] = entropy(softmax(logits));
    } else {
      const double mx = logits.maxCoeff();
      const double lse = mx + std::log((logits.array() - mx).exp().sum());
      out[i] = lse - logits[data.labels[i]];
    }
  }
  return out;
}

TeacherResult train_teacher(Network model, const Dataset& noisy, const TeacherConfig& config) {
  if (config.train.selector != LossSelector::kCE) throw ConfigError("teacher must train with the CE loss");
  if (config.cycle_epochs < 1) throw ConfigError("teacher cycle length must be >= 1");
  if (config.train.epochs < 2 * config.cycle_epochs) {
    throw ConfigError("teacher needs at least two cycles (epochs >= 2 * cycle_epochs)");
  }
  validate(config.mode);

  TeacherResult result;
  Trainer trainer(model, noisy, config.train);
  const bool reselect = config.mode.kind != SelectionKind::kWholeSet;
  auto select = [&](int epoch) {
    SelectionRecord rec;
    rec.epoch = epoch;
    const auto stat = selection_statistic(model, noisy, config.mode.statistic);
    try {
      rec.indices = select_confident(stat, config.mode, config.train.seed + static_cast<std::uint64_t>(epoch) + 1);
    } catch (const EmptyTrustedSetError&) {
      rec.fell_back = true;
    }
    return rec;
  };

  for (int e = 0; e < config.train.epochs; ++e) {
    if (reselect && e > 0 && e % config.cycle_epochs == 0) {
      SelectionRecord rec = select(e);
      if (!rec.fell_back) {
        try {
          trainer.set_subset(rec.indices);
        } catch (const InvalidBatchError&) {
          rec.fell_back = true;  // too few identities to fill a batch
        }
      }
      if (rec.fell_back) trainer.set_subset({});
      result.selections.push_back(std::move(rec));
    }
    trainer.run_epoch();
  }
  if (reselect) {
    SelectionRecord last = select(config.train.epochs);
    if (last.fell_back) {
      last.indices.resize(noisy.size());
      std::iota(last.indices.begin(), last.indices.end(), 0);
    }
    result.trusted = last.indices;
    result.selections.push_back(std::move(last));
  } else {
    result.trusted.resize(noisy.size());
    std::iota(result.trusted.begin(), result.trusted.end(), 0);
  }
  result.log = trainer.log();
  result.teacher = std::move(model);
  return result;
}

std::vector<Label> SoftLabelTable::argmax_labels() const {
  std::vector<Label> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    Eigen::Index best = 0;
    probabilities.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    out[i] = static_cast<Label>(best);
  }
  return out;
}

SoftLabelTable generate_soft_labels(const Network& teacher, const Dataset& data,
                                    std::span<const std::size_t> trusted) {
  const ForwardCache cache = forward_batch(teacher, data.features);
  const double log_c = std::log(static_cast<double>(teacher.num_classes()));
  SoftLabelTable table;
  table.ids = data.ids;
  table.probabilities.resize(static_cast<Eigen::Index>(data.size()), teacher.num_classes());
  table.confidence.resize(data.size());
  table.trusted.assign(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector p = softmax(cache.logits.row(row).transpose());
    table.probabilities.row(row) = p.transpose();
    table.confidence[i] = std::clamp(1.0 - entropy(p) / log_c, 0.0, 1.0);
  }
  for (std::size_t i : trusted) table.trusted.at(i) = 1;
  return table;
}

void save_soft_labels(const SoftLabelTable& table, const std::string& path, const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write soft-label table '" + path + "'");
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "id,trusted,confidence";
  for (Eigen::Index c = 0; c < table.probabilities.cols(); ++c) out << ",p" << c;
  out << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.ids[i] << ',' << (table.trusted[i] ? 1 : 0) << ',' << format_double(table.confidence[i]);
    for (Eigen::Index c = 0; c < table.probabilities.cols(); ++c) {
      out << ',' << format_double(table.probabilities(static_cast<Eigen::Index>(i), c));
    }
    out << '\n';
  }
}

SoftLabelTable load_soft_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read soft-label table '" + path + "'");
  std::string line;
  do {
    if (!std::getline(in, line)) throw IoError(path + ": empty soft-label table");
  } while (line.empty() || line[0] == '#');
  const auto classes = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) - 2;
  if (line.rfind("id,trusted,confidence", 0) != 0 || classes < 2) throw IoError(path + ": bad header");
  SoftLabelTable table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream rec(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(rec, tok, ',')) toks.push_back(tok);
    if (static_cast<Eigen::Index>(toks.size()) != classes + 3) throw IoError(path + ": row has wrong column count");
    try {
      table.ids.push_back(std::stoull(toks[0]));
      table.trusted.push_back(toks[1] == "1" ? 1 : 0);
      table.confidence.push_back(std::stod(toks[2]));
      std::vector<double> p;
      for (std::size_t c = 3; c < toks.size(); ++c) p.push_back(std::stod(toks[c]));
      rows.push_back(std::move(p));
    } catch (const std::logic_error&) {
      throw IoError(path + ": malformed number");
    }
  }
  table.probabilities.resize(static_cast<Eigen::Index>(rows.size()), classes);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < classes; ++c) table.probabilities(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return table;
}

TrainResult train_student(Network model, const Dataset& data, const SoftLabelTable& soft,
                          const TrainConfig& config) {
  if (config.selector != LossSelector::kCeFat && config.selector != LossSelector::kCeFatNorm) {
    throw ConfigError("student training requires the CE-FAT or CE-FATnorm selector");
  }
  if (soft.size() != data.size()) throw InvalidArgumentError("soft-label table does not match the dataset");
  TrainingTargets targets;
  targets.labels = soft.argmax_labels();
  const std::set<Label> classes(targets.labels.begin(), targets.labels.end());
  if (classes.size() < static_cast<std::size_t>(config.batch.identities)) {
    throw InvalidBatchError("teacher predictions cover only " + std::to_string(classes.size()) +
                            " classes, fewer than the " + std::to_string(config.batch.identities) +
                            " identities a student batch needs");
  }
  targets.soft_targets = soft.probabilities;
  targets.centroid_member = soft.trusted;
  targets.centroid_weights = soft.confidence;
  return train(std::move(model), data, config, std::move(targets));
}

}  // namespace fatlab
