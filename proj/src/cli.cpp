#include "fatlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "fatlab/errors.hpp"

namespace fatlab {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig resolve_config(const CliOptions& options) {
  json doc = options.config_path.empty() ? json::object() : load_config_document(options.config_path);
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& o : options.overrides) apply_override(doc, o);
  if (!options.command.empty()) doc["command"] = options.command;
  if (options.seed) doc["seed"] = *options.seed;
  if (options.out) doc["out"] = *options.out;
  if (options.transfer) doc["data"]["transfer_path"] = *options.transfer;
  RunConfig config = parse_run_config(doc);
  validate(config);

  const bool reads_data = config.command != "gen-data" && config.command != "bench";
  auto must_exist = [](const std::string& path, const std::string& key) {
    if (!path.empty() && !fs::exists(path)) throw ConfigError(key + " '" + path + "' does not exist");
  };
  if (reads_data) {
    must_exist(config.data.path, "data.path");
    must_exist(config.data.provenance, "data.provenance");
    must_exist(config.data.checkpoint, "data.checkpoint");
    must_exist(config.data.transfer_path, "data.transfer_path");
  }
  return config;
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData prepared;
  if (config.data.path.empty()) {
    NoisyDataset noisy = inject_noise(generate_synthetic_dataset(config.synthetic), config.noise);
    prepared.data = std::move(noisy.data);
    prepared.provenance = std::move(noisy.provenance);
    return prepared;
  }
  prepared.data = load_dataset(config.data.path);
  if (!config.data.provenance.empty()) {
    prepared.provenance = load_provenance(config.data.provenance);
    if (prepared.provenance.size() != prepared.data.size()) {
      throw ConfigError("data.provenance has " + std::to_string(prepared.provenance.size()) +
                        " rows but the dataset has " + std::to_string(prepared.data.size()));
    }
  } else {
    prepared.provenance.assign(prepared.data.size(), Provenance::kClean);
    if (prepared.data.has_clean_labels()) {
      for (std::size_t i = 0; i < prepared.data.size(); ++i) {
        if (prepared.data.labels[i] != prepared.data.clean_labels[i]) prepared.provenance[i] = Provenance::kFlip;
      }
    }
  }
  return prepared;
}

NetworkSpec network_spec(const RunConfig& config, const Dataset& data) {
  NetworkSpec spec = config.model;
  spec.input_dim = data.input_dim();
  spec.num_classes = data.num_classes;
  return spec;
}

namespace {

// Provenance of each training-split row, looked up through sample ids.
std::vector<Provenance> split_provenance(const PreparedData& prepared, const Dataset& part) {
  std::map<std::size_t, Provenance> by_id;
  for (std::size_t i = 0; i < prepared.data.size(); ++i) by_id[prepared.data.ids[i]] = prepared.provenance[i];
  std::vector<Provenance> out;
  out.reserve(part.size());
  for (std::size_t id : part.ids) out.push_back(by_id.at(id));
  return out;
}

}  // namespace

TrainOutcome run_train(const RunConfig& config, const PreparedData& prepared) {
  const HoldoutSplit split = split_holdout(prepared.data, config.data.queries_per_identity);
  Network net = make_network(network_spec(config, prepared.data), config.seed);
  TrainOutcome outcome{train(std::move(net), split.train, config.train), {}};
  outcome.report = evaluate_model(outcome.result.model, split.query, split.train);
  return outcome;
}

DistillOutcome run_distill(const RunConfig& config, const PreparedData& prepared) {
  const HoldoutSplit split = split_holdout(prepared.data, config.data.queries_per_identity);
  const NetworkSpec spec = network_spec(config, prepared.data);
  const auto provenance = split_provenance(prepared, split.train);

  TeacherConfig teacher_config;
  teacher_config.train = config.train;
  teacher_config.train.selector = LossSelector::kCE;
  teacher_config.train.epochs = config.teacher.epochs;
  teacher_config.train.lr.base = config.teacher.lr;
  teacher_config.train.loss.normalized = false;
  teacher_config.train.loss.centroid = CentroidOption::kMean;
  teacher_config.mode = config.selection;
  teacher_config.cycle_epochs = config.teacher.cycle_epochs;

  DistillOutcome outcome;
  outcome.teacher = train_teacher(make_network(spec, config.seed), split.train, teacher_config);
  outcome.full_corruption = corruption_rate(provenance);
  outcome.first_selection_corruption = corruption_rate(provenance, outcome.teacher.selections.front().indices);
  outcome.final_selection_corruption = corruption_rate(provenance, outcome.teacher.trusted);
  outcome.soft = generate_soft_labels(outcome.teacher.teacher, split.train, outcome.teacher.trusted);

  const Network init = make_network(spec, config.seed + 1);
  outcome.student = train_student(init, split.train, outcome.soft, config.train);
  outcome.baseline = train(init, split.train, config.train);

  outcome.teacher_report = evaluate_model(outcome.teacher.teacher, split.query, split.train);
  outcome.distilled_report = evaluate_model(outcome.student.model, split.query, split.train);
  outcome.baseline_report = evaluate_model(outcome.baseline.model, split.query, split.train);
  return outcome;
}

std::vector<BenchReport> run_bench(const RunConfig& config) {
  std::vector<BenchReport> reports;
  for (const auto& tag : config.bench.losses) {
    BenchSpec spec;
    spec.loss = parse_bench_loss(tag);
    spec.sizes = spec.loss == BenchLoss::kFat ? config.bench.fat_sizes : config.bench.triplet_sizes;
    spec.repeats = config.bench.repeats;
    spec.seed = config.seed;
    spec.per_identity = config.bench.per_identity;
    spec.embedding_dim = config.bench.embedding_dim;
    spec.margin = config.train.loss.margin;
    spec.group_identities = config.bench.group_identities;
    reports.push_back(benchmark_loss_scaling(spec));
  }
  return reports;
}

namespace {

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

void command_gen_data(const RunConfig& config, const json& embedded, const fs::path& dir, std::ostream& out) {
  const PreparedData prepared = prepare_data(config);
  save_dataset(prepared.data, (dir / "dataset.txt").string(), embedded);
  save_provenance(prepared.provenance, prepared.data.ids, (dir / "provenance.csv").string(), embedded);
  out << "wrote " << prepared.data.size() << " samples to " << (dir / "dataset.txt").string() << '\n';
}

void command_train(const RunConfig& config, const json& embedded, const fs::path& dir, std::ostream& out) {
  const TrainOutcome outcome = run_train(config, prepare_data(config));
  save_checkpoint(outcome.result.model, (dir / "checkpoint.json").string(), embedded);
  save_train_log(outcome.result.log, (dir / "train_log.csv").string(), embedded);
  save_train_timing(outcome.result.log, (dir / "train_timing.csv").string(), embedded);
  write_json({{"config", embedded}, {"report", to_json(outcome.report)}}, dir / "eval_report.json");
  out << "top-1 " << outcome.report.top1 << "  mAP " << outcome.report.mean_ap << '\n';
}

void command_distill(const RunConfig& config, const json& embedded, const fs::path& dir, std::ostream& out) {
  const DistillOutcome o = run_distill(config, prepare_data(config));
  save_checkpoint(o.teacher.teacher, (dir / "teacher.json").string(), embedded);
  save_soft_labels(o.soft, (dir / "soft_labels.csv").string(), embedded);
  save_checkpoint(o.student.model, (dir / "student.json").string(), embedded);
  save_checkpoint(o.baseline.model, (dir / "baseline.json").string(), embedded);
  save_train_log(o.teacher.log, (dir / "teacher_log.csv").string(), embedded);
  save_train_log(o.student.log, (dir / "student_log.csv").string(), embedded);
  save_train_log(o.baseline.log, (dir / "baseline_log.csv").string(), embedded);
  json selections = json::array();
  for (const auto& s : o.teacher.selections) {
    selections.push_back({{"epoch", s.epoch}, {"size", s.indices.size()}, {"fell_back", s.fell_back}});
  }
  write_json({{"config", embedded},
              {"teacher", to_json(o.teacher_report)},
              {"distilled", to_json(o.distilled_report)},
              {"baseline", to_json(o.baseline_report)},
              {"corruption",
               {{"full_set", o.full_corruption},
                {"first_selection", o.first_selection_corruption},
                {"final_selection", o.final_selection_corruption}}},
              {"selections", selections}},
             dir / "distill_report.json");
  out << "distilled mAP " << o.distilled_report.mean_ap << "  baseline mAP " << o.baseline_report.mean_ap << '\n';
}

void command_eval(const RunConfig& config, const json& embedded, const fs::path& dir, std::ostream& out) {
  const Network net = load_checkpoint(config.data.checkpoint);
  const PreparedData prepared = prepare_data(config);
  const HoldoutSplit split = split_holdout(prepared.data, config.data.queries_per_identity);
  if (net.input_dim() != prepared.data.input_dim()) {
    throw InvalidArgumentError("checkpoint expects input dimension " + std::to_string(net.input_dim()) +
                               ", dataset has " + std::to_string(prepared.data.input_dim()));
  }
  json report{{"config", embedded}, {"report", to_json(evaluate_model(net, split.query, split.train))}};
  out << "mAP " << report["report"]["mAP"].get<double>();
  if (!config.data.transfer_path.empty()) {
    const Dataset target = load_dataset(config.data.transfer_path);
    const EvalReport transfer = evaluate_transfer(net, target, config.data.queries_per_identity);
    report["transfer"] = to_json(transfer);
    out << "  transfer mAP " << transfer.mean_ap;
  }
  out << '\n';
  write_json(report, dir / "eval_report.json");
}

void command_bench(const RunConfig& config, const json& embedded, const fs::path& dir, std::ostream& out) {
  const auto reports = run_bench(config);
  json all = json::array();
  for (const auto& r : reports) {
    all.push_back(to_json(r));
    save_bench_table(r, (dir / ("bench_" + to_string(r.loss) + ".csv")).string(), embedded);
    out << to_string(r.loss) << " slope " << r.slope << '\n';
  }
  write_json({{"config", embedded}, {"reports", all}}, dir / "bench_report.json");
}

std::string data_context(const RunConfig& config) {
  return config.data.path.empty() ? "synthetic data, seed " + std::to_string(config.seed)
                                  : "dataset '" + config.data.path + "'";
}

}  // namespace

int run(const CliOptions& options, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = resolve_config(options);
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    const fs::path dir(config.out);
    fs::create_directories(dir);
    const json embedded = to_json(config);
    if (config.command == "gen-data") {
      command_gen_data(config, embedded, dir, out);
    } else if (config.command == "train") {
      command_train(config, embedded, dir, out);
    } else if (config.command == "distill") {
      command_distill(config, embedded, dir, out);
    } else if (config.command == "eval") {
      command_eval(config, embedded, dir, out);
    } else {
      command_bench(config, embedded, dir, out);
    }
  } catch (const ValidationError& e) {
    err << "error (" << data_context(config) << "): " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error (" << data_context(config) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace fatlab
