#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fatlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fatlab: point-to-set metric learning experiments"};
  app.require_subcommand(1);

  fatlab::CliOptions options;
  std::uint64_t seed = 0;
  std::string out;
  std::string transfer;

  const std::map<std::string, std::string> about{
      {"gen-data", "write a synthetic dataset and its provenance mask"},
      {"train", "train one model and evaluate held-out queries"},
      {"distill", "teacher selection, soft labels, distilled vs plain student"},
      {"eval", "evaluate a checkpoint, optionally on a transfer dataset"},
      {"bench", "time loss evaluation against batch size"},
  };
  for (const auto& name : fatlab::kCommands) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", options.config_path, "config file or any artifact with an embedded config");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--set", options.overrides, "override a config key: section.key=value")->take_all();
    if (name == "eval") sub->add_option("--transfer", transfer, "second dataset for direct transfer");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  options.command = chosen->get_name();
  if (chosen->count("--seed") > 0) options.seed = seed;
  if (chosen->count("--out") > 0) options.out = out;
  if (options.command == "eval" && chosen->count("--transfer") > 0) options.transfer = transfer;
  return fatlab::run(options, std::cout, std::cerr);
}
