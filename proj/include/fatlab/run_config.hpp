#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatlab/bench.hpp"
#include "fatlab/distill.hpp"
#include "fatlab/model.hpp"
#include "fatlab/trainer.hpp"

namespace fatlab {

struct DataSection {
  std::string path;           // dataset to read; empty = generate from `synthetic`
  std::string provenance;     // provenance mask for `path`; optional
  std::string transfer_path;  // eval --transfer target
  std::string checkpoint;     // model to evaluate (eval)
  int queries_per_identity = 2;
};

struct BenchSection {
  std::vector<std::string> losses{"FAT", "tripletBatchAll"};
  std::vector<std::size_t> fat_sizes{512, 1024, 2048, 4096, 8192};
  std::vector<std::size_t> triplet_sizes{64, 128, 256, 512};
  int repeats = 3;
  int per_identity = 8;
  int embedding_dim = 16;
  int group_identities = 16;
};

struct TeacherSection {
  int epochs = 20;
  int cycle_epochs = 5;
  double lr = 0.8;
};

/// Everything one command needs. Parsed from a JSON document whose sections
/// mirror the library types: data, synthetic, noise_spec, model, train_config,
/// loss_config, batch_spec, selection_mode, teacher_config, bench. Unknown keys are errors.
struct RunConfig {
  std::string command = "train";
  std::uint64_t seed = 0;
  std::string out = "out";
  DataSection data;
  SyntheticSpec synthetic;
  NoiseSpec noise;
  NetworkSpec model;
  TrainConfig train;
  SelectionMode selection;
  TeacherSection teacher;
  BenchSection bench;
};

inline const std::vector<std::string> kCommands{"gen-data", "train", "distill", "eval", "bench"};

/// Strict parse with defaults for absent keys. Throws ConfigError naming the
/// offending key.
RunConfig parse_run_config(const nlohmann::json& j);

/// Fully resolved config; `out` is left out so artifacts written to
/// different directories stay byte-identical.
nlohmann::json to_json(const RunConfig& config);

/// Apply `section.key=value` (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Loads a config file: a run-config JSON document, or any artifact that
/// embeds one (checkpoint/report JSON with a "config" member, or a text file
/// whose first line is `# config: {...}`).
nlohmann::json load_config_document(const std::string& path);

/// Checks cross-field invariants (e.g. normalized loss with C1) and throws
/// ConfigError.
void validate(const RunConfig& config);

}  // namespace fatlab
