#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fatlab/cli.hpp"
#include "fatlab/errors.hpp"

using namespace fatlab;
namespace fs = std::filesystem;

namespace {

fs::path root() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "fatlab_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the CLI binary; stderr goes to `err` under the scratch dir.
int cli(const std::string& args, const std::string& err = "stderr.txt") {
  const char* bin = std::getenv("FATLAB_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "FATLAB_CLI not set");
  const std::string cmd = std::string(bin) + " " + args + " > /dev/null 2> " + (root() / err).string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string out_dir(const std::string& name) { return (root() / name).string(); }

}  // namespace

TEST_CASE("gen-data is byte-identical across runs") {
  REQUIRE(cli("gen-data --seed 7 --out " + out_dir("gen_a")) == 0);
  REQUIRE(cli("gen-data --seed 7 --out " + out_dir("gen_b")) == 0);
  for (const char* f : {"dataset.txt", "provenance.csv"}) {
    CHECK(slurp(root() / "gen_a" / f) == slurp(root() / "gen_b" / f));
    CHECK_FALSE(slurp(root() / "gen_a" / f).empty());
  }
  REQUIRE(cli("gen-data --seed 8 --out " + out_dir("gen_c")) == 0);
  CHECK(slurp(root() / "gen_a" / "dataset.txt") != slurp(root() / "gen_c" / "dataset.txt"));
}

TEST_CASE("unknown config key is a config error naming the key") {
  const fs::path cfg = root() / "bad.json";
  std::ofstream(cfg) << R"({"train_config": {"epochs": 2, "learning_rate": 0.1}})";
  CHECK(cli("train --config " + cfg.string() + " --out " + out_dir("bad"), "bad_err.txt") == 1);
  CHECK(slurp(root() / "bad_err.txt").find("train_config.learning_rate") != std::string::npos);
}

TEST_CASE("normalized loss with an unnormalized centroid is rejected") {
  CHECK(cli("train --set loss_config.normalized=true --set loss_config.centroid=C1 --out " + out_dir("norm")) == 1);
  CHECK(cli("train --set train_config.loss=CE-FAT --set loss_config.centroid=C4 --out " + out_dir("norm")) == 1);
  CHECK(cli("train --set train_config.loss=CE-FATnorm --set loss_config.centroid=C2 --set train_config.epochs=1 --out " + out_dir("norm_ok")) == 0);
}

TEST_CASE("exit codes for usage and runtime failures") {
  CHECK(cli("train --no-such-flag") == 1);
  CHECK(cli("eval --out " + out_dir("noeval")) == 1);
  const fs::path broken = root() / "broken.json";
  std::ofstream(broken) << "{\"not\": \"a checkpoint\"}";
  CHECK(cli("eval --set data.checkpoint=" + broken.string() + " --out " + out_dir("broken"), "broken_err.txt") == 2);
  CHECK_FALSE(slurp(root() / "broken_err.txt").empty());
}

TEST_CASE("lambda zero leaves the cross-entropy column at zero") {
  REQUIRE(cli("train --seed 2 --set train_config.epochs=3 --set loss_config.lambda=0 --out " + out_dir("lam0")) == 0);
  std::ifstream in(root() / "lam0" / "train_log.csv");
  std::string line;
  std::getline(in, line);
  if (line.rfind("# config:", 0) == 0) std::getline(in, line);
  REQUIRE(line.find("ce_weighted") != std::string::npos);
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c <= 6; ++c) std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == 0.0);
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("rerunning from an artifact's embedded config reproduces it") {
  REQUIRE(cli("train --seed 4 --set train_config.epochs=6 --out " + out_dir("run_a")) == 0);
  REQUIRE(cli("train --config " + (root() / "run_a" / "eval_report.json").string() + " --out " + out_dir("run_b")) == 0);
  for (const char* f : {"checkpoint.json", "train_log.csv", "eval_report.json"}) {
    CHECK_MESSAGE(slurp(root() / "run_a" / f) == slurp(root() / "run_b" / f), f);
  }
  const auto report = nlohmann::json::parse(slurp(root() / "run_a" / "eval_report.json"));
  CHECK(report.at("config").at("seed") == 4);
  CHECK(report.at("report").at("top1").get<double>() >= 0.0);

  // Evaluating the saved checkpoint reproduces the training-time report.
  REQUIRE(cli("eval --config " + (root() / "run_a" / "eval_report.json").string() +
              " --set data.checkpoint=" + (root() / "run_a" / "checkpoint.json").string() + " --out " +
              out_dir("run_eval")) == 0);
  const auto again = nlohmann::json::parse(slurp(root() / "run_eval" / "eval_report.json"));
  CHECK(again.at("report") == report.at("report"));
}

TEST_CASE("training on a generated dataset file") {
  REQUIRE(cli("gen-data --seed 9 --out " + out_dir("gen_d")) == 0);
  REQUIRE(cli("train --seed 9 --set train_config.epochs=2 --set data.path=" + (root() / "gen_d" / "dataset.txt").string() +
              " --set data.provenance=" + (root() / "gen_d" / "provenance.csv").string() + " --out " +
              out_dir("from_file")) == 0);
  CHECK(fs::exists(root() / "from_file" / "checkpoint.json"));
  CHECK(cli("train --set data.path=" + (root() / "missing.txt").string() + " --out " + out_dir("missing")) == 1);
}

TEST_CASE("resolve_config layering") {
  CliOptions o;
  o.command = "train";
  o.overrides = {"train_config.epochs=4", "seed=3"};
  o.seed = 12;
  const RunConfig c = resolve_config(o);
  CHECK(c.train.epochs == 4);
  CHECK(c.seed == 12);
  CHECK(c.train.seed == 12);
  CHECK(c.noise.seed == 13);
  o.overrides = {"bench.losses=[\"FAT\", \"CE\"]"};
  o.command = "bench";
  CHECK_THROWS_AS(resolve_config(o), ConfigError);
}
