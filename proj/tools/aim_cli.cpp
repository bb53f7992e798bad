#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "app.hpp"

namespace fs = std::filesystem;
using namespace aim::app;

int main(int argc, char** argv) {
  CLI::App cli{"Fisher-guided asymmetric masking for continual learning on a toy vision-language stream"};
  cli.require_subcommand(1);

  std::string config_path, out, seeds, axis;
  std::vector<std::string> runs;

  auto* gen = cli.add_subcommand("gen", "generate a task stream file");
  gen->add_option("--config", config_path, "JSON config")->required();
  gen->add_option("--out", out, "stream file to write")->required();

  auto* train = cli.add_subcommand("train", "train one method over the stream for each seed");
  train->add_option("--config", config_path, "JSON config")->required();
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--seeds", seeds, "comma-separated root seeds (overrides the config)");

  auto* sweep = cli.add_subcommand("sweep", "repeat training across one ablation axis");
  sweep->add_option("--config", config_path, "JSON config")->required();
  sweep->add_option("--axis", axis, "memory, ratios, order, aggregation or variant")
      ->required()
      ->check(CLI::IsMember({"memory", "ratios", "order", "aggregation", "variant"}));
  sweep->add_option("--out", out, "sweep directory")->required();

  auto* report = cli.add_subcommand("report", "summarize run directories");
  report->add_option("--runs", runs, "run directories")->required();
  report->add_option("--out", out, "report directory")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      return cmd_report(dirs, out, std::cout);
    }
    RunConfig cfg = load_config(config_path);
    if (gen->parsed()) return cmd_gen(cfg, out, std::cout);
    if (train->parsed()) {
      if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
      return cmd_train(cfg, out, std::cout);
    }
    return cmd_sweep(cfg, axis, out, std::cout);
  } catch (const std::exception& e) {
    return report_error(e, std::cerr);
  }
}
