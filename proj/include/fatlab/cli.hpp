#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fatlab/bench.hpp"
#include "fatlab/dataset.hpp"
#include "fatlab/distill.hpp"
#include "fatlab/eval.hpp"
#include "fatlab/run_config.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

struct CliOptions {
  std::string command;
  std::string config_path;  // empty = defaults only
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> transfer;
  std::vector<std::string> overrides;  // section.key=value
};

/// Config file, then --set overrides, then the dedicated flags. Validated.
RunConfig resolve_config(const CliOptions& options);

struct PreparedData {
  Dataset data;
  std::vector<Provenance> provenance;  // one per sample
};

/// Loads data.path, or generates the synthetic set and injects noise_spec.
/// Loaded data without a provenance file gets flips inferred from clean labels.
PreparedData prepare_data(const RunConfig& config);

NetworkSpec network_spec(const RunConfig& config, const Dataset& data);

struct TrainOutcome {
  TrainResult result;
  EvalReport report;  // held-out queries against the training split
};

TrainOutcome run_train(const RunConfig& config, const PreparedData& prepared);

struct DistillOutcome {
  TeacherResult teacher;
  SoftLabelTable soft;
  TrainResult student;
  TrainResult baseline;  // same init and batches, trained on the noisy labels
  EvalReport teacher_report;
  EvalReport distilled_report;
  EvalReport baseline_report;
  double full_corruption = 0.0;           // over the training split
  double first_selection_corruption = 0.0;
  double final_selection_corruption = 0.0;
};

DistillOutcome run_distill(const RunConfig& config, const PreparedData& prepared);

std::vector<BenchReport> run_bench(const RunConfig& config);

/// Runs one command and writes its artifacts under config.out. Returns the
/// process exit status: 0 success, 1 validation error, 2 runtime error.
int run(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace fatlab
