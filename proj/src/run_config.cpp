#include "fatlab/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fatlab/dataset.hpp"
#include "fatlab/errors.hpp"

namespace fatlab {

namespace {

using nlohmann::json;

// Reads the members of one JSON object, tracking which keys were consumed so
// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has the wrong type: " + j_.at(key).dump());
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, qualified(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("command", c.command);
  root.read("seed", c.seed);
  root.read("out", c.out);

  {
    Section s = root.child("data");
    s.read("path", c.data.path);
    s.read("provenance", c.data.provenance);
    s.read("transfer_path", c.data.transfer_path);
    s.read("checkpoint", c.data.checkpoint);
    s.read("queries_per_identity", c.data.queries_per_identity);
    s.finish();
  }
  {
    Section s = root.child("synthetic");
    s.read("identities", c.synthetic.identities);
    s.read("per_identity", c.synthetic.per_identity);
    s.read("input_dim", c.synthetic.input_dim);
    s.read("separation", c.synthetic.separation);
    s.finish();
  }
  {
    Section s = root.child("noise_spec");
    s.read("flip_rate", c.noise.flip_rate);
    s.read("outlier_rate", c.noise.outlier_rate);
    s.read("mixture_rate", c.noise.mixture_rate);
    s.finish();
  }
  {
    Section s = root.child("model");
    std::string arch = to_string(c.model.architecture);
    s.read("architecture", arch);
    c.model.architecture = parse_architecture(arch);
    s.read("hidden_dim", c.model.hidden_dim);
    s.read("embedding_dim", c.model.embedding_dim);
    s.finish();
  }
  {
    Section s = root.child("train_config");
    s.read("epochs", c.train.epochs);
    s.read("lr", c.train.lr.base);
    std::string schedule = c.train.lr.kind == LrSchedule::Kind::kConstant ? "constant" : "step";
    s.read("schedule", schedule);
    if (schedule == "constant") {
      c.train.lr.kind = LrSchedule::Kind::kConstant;
    } else if (schedule == "step") {
      c.train.lr.kind = LrSchedule::Kind::kStepDecay;
    } else {
      throw ConfigError("unknown train_config.schedule '" + schedule + "' (expected constant | step)");
    }
    s.read("lr_decay", c.train.lr.decay);
    s.read("decay_at", c.train.lr.decay_at);
    std::string loss = to_string(c.train.selector);
    s.read("loss", loss);
    c.train.selector = parse_loss_selector(loss);
    s.read("threads", c.train.threads);
    s.finish();
  }
  {
    Section s = root.child("loss_config");
    const bool norm = is_normalized(c.train.selector);
    c.train.loss.normalized = norm;
    c.train.loss.margin = norm ? 0.1 : 1.0;
    c.train.loss.centroid = norm ? CentroidOption::kNormalizedMeanOfNormalized : CentroidOption::kMean;
    s.read("margin", c.train.loss.margin);
    s.read("lambda", c.train.loss.lambda);
    s.read("normalized", c.train.loss.normalized);
    std::string centroid = to_string(c.train.loss.centroid);
    s.read("centroid", centroid);
    c.train.loss.centroid = parse_centroid_option(centroid);
    std::string negative = to_string(c.train.loss.negative);
    s.read("negative", negative);
    c.train.loss.negative = parse_negative_strategy(negative);
    s.read("average_active_only", c.train.loss.average_active_only);
    s.finish();
  }
  {
    Section s = root.child("batch_spec");
    s.read("identities", c.train.batch.identities);
    s.read("per_identity", c.train.batch.per_identity);
    s.finish();
  }
  {
    Section s = root.child("selection_mode");
    std::string mode = to_string(c.selection.kind);
    s.read("mode", mode);
    c.selection.kind = parse_selection_kind(mode);
    s.read("threshold", c.selection.threshold);
    std::string statistic = to_string(c.selection.statistic);
    s.read("statistic", statistic);
    c.selection.statistic = parse_selection_statistic(statistic);
    s.read("hard_fraction", c.selection.hard_fraction);
    s.read("soft_base_fraction", c.selection.soft_base_fraction);
    s.read("soft_extra_fraction", c.selection.soft_extra_fraction);
    s.read("soft_threshold_extra", c.selection.soft_threshold_extra);
    s.finish();
  }
  {
    Section s = root.child("teacher_config");
    s.read("epochs", c.teacher.epochs);
    s.read("cycle_epochs", c.teacher.cycle_epochs);
    s.read("lr", c.teacher.lr);
    s.finish();
  }
  {
    Section s = root.child("bench");
    s.read("losses", c.bench.losses);
    s.read("fat_sizes", c.bench.fat_sizes);
    s.read("triplet_sizes", c.bench.triplet_sizes);
    s.read("repeats", c.bench.repeats);
    s.read("per_identity", c.bench.per_identity);
    s.read("embedding_dim", c.bench.embedding_dim);
    s.read("group_identities", c.bench.group_identities);
    s.finish();
  }
  root.finish();
  c.train.seed = c.seed;
  c.synthetic.seed = c.seed;
  c.noise.seed = c.seed + 1;
  c.train.batch.seed = c.seed;
  return c;
}

json to_json(const RunConfig& c) {
  return {
      {"command", c.command},
      {"seed", c.seed},
      {"data",
       {{"path", c.data.path},
        {"provenance", c.data.provenance},
        {"transfer_path", c.data.transfer_path},
        {"checkpoint", c.data.checkpoint},
        {"queries_per_identity", c.data.queries_per_identity}}},
      {"synthetic",
       {{"identities", c.synthetic.identities},
        {"per_identity", c.synthetic.per_identity},
        {"input_dim", c.synthetic.input_dim},
        {"separation", c.synthetic.separation}}},
      {"noise_spec",
       {{"flip_rate", c.noise.flip_rate},
        {"outlier_rate", c.noise.outlier_rate},
        {"mixture_rate", c.noise.mixture_rate}}},
      {"model",
       {{"architecture", to_string(c.model.architecture)},
        {"hidden_dim", c.model.hidden_dim},
        {"embedding_dim", c.model.embedding_dim}}},
      {"train_config",
       {{"epochs", c.train.epochs},
        {"lr", c.train.lr.base},
        {"schedule", c.train.lr.kind == LrSchedule::Kind::kConstant ? "constant" : "step"},
        {"lr_decay", c.train.lr.decay},
        {"decay_at", c.train.lr.decay_at},
        {"loss", to_string(c.train.selector)},
        {"threads", c.train.threads}}},
      {"loss_config",
       {{"margin", c.train.loss.margin},
        {"lambda", c.train.loss.lambda},
        {"normalized", c.train.loss.normalized},
        {"centroid", to_string(c.train.loss.centroid)},
        {"negative", to_string(c.train.loss.negative)},
        {"average_active_only", c.train.loss.average_active_only}}},
      {"batch_spec", {{"identities", c.train.batch.identities}, {"per_identity", c.train.batch.per_identity}}},
      {"selection_mode",
       {{"mode", to_string(c.selection.kind)},
        {"threshold", c.selection.threshold},
        {"statistic", to_string(c.selection.statistic)},
        {"hard_fraction", c.selection.hard_fraction},
        {"soft_base_fraction", c.selection.soft_base_fraction},
        {"soft_extra_fraction", c.selection.soft_extra_fraction},
        {"soft_threshold_extra", c.selection.soft_threshold_extra}}},
      {"teacher_config",
       {{"epochs", c.teacher.epochs}, {"cycle_epochs", c.teacher.cycle_epochs}, {"lr", c.teacher.lr}}},
      {"bench",
       {{"losses", c.bench.losses},
        {"fat_sizes", c.bench.fat_sizes},
        {"triplet_sizes", c.bench.triplet_sizes},
        {"repeats", c.bench.repeats},
        {"per_identity", c.bench.per_identity},
        {"embedding_dim", c.bench.embedding_dim},
        {"group_identities", c.bench.group_identities}}},
  };
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &j;
  std::istringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) keys.push_back(part);
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    node = &(*node)[keys[i]];
    if (node->is_null()) *node = json::object();
  }
  (*node)[keys.back()] = value;
}

json load_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::string first;
  std::getline(in, first);
  if (first.rfind("# config: ", 0) == 0) {
    return read_embedded_config(path);
  }
  in.clear();
  in.seekg(0);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.at("config").is_object()) return j.at("config");
  return j;
}

void validate(const RunConfig& c) {
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end()) {
    throw ConfigError("unknown command '" + c.command + "'");
  }
  if (c.data.queries_per_identity < 0) throw ConfigError("data.queries_per_identity must be >= 0");
  if (c.model.hidden_dim < 1 || c.model.embedding_dim < 1) throw ConfigError("model dimensions must be >= 1");
  validate(c.noise);
  validate(c.selection);
  if (c.command == "train" || c.command == "distill") validate(c.train);
  if (c.command == "train" && uses_clusters(c.train.selector)) validate(c.train.loss);
  if (c.command == "distill") {
    if (c.train.selector != LossSelector::kCeFat && c.train.selector != LossSelector::kCeFatNorm) {
      throw ConfigError("distill trains its student with CE-FAT or CE-FATnorm, got " + to_string(c.train.selector));
    }
    if (c.teacher.cycle_epochs < 1 || c.teacher.epochs < 2 * c.teacher.cycle_epochs) {
      throw ConfigError("teacher_config.epochs must be >= 2 * teacher_config.cycle_epochs");
    }
    if (!(c.teacher.lr >= 0.0)) throw ConfigError("teacher_config.lr must be >= 0");
  }
  if (c.command == "eval" && c.data.checkpoint.empty()) throw ConfigError("eval needs data.checkpoint");
  if (c.command == "bench") {
    for (const auto& l : c.bench.losses) parse_bench_loss(l);
  }
}

}  // namespace fatlab
