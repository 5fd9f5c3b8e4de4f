#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "notegen/commands.hpp"

namespace fs = std::filesystem;
using namespace notegen;

int main(int argc, char** argv) {
  CLI::App app{"notegen: progress note A&P generation harness"};
  app.require_subcommand(1);

  std::string config_path = "notegen.ini";
  std::string out_dir;
  bool resume = false;
  std::size_t parallelism = 0;
  std::string log_level;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Configuration file")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory (overrides run.output_dir)");
  app.add_flag("--resume", resume, "Skip instances already completed by a previous run with the same config");
  app.add_option("--parallelism", parallelism, "Worker count (overrides run.parallelism)")
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "error, warn, info or debug");
  app.add_option("--set", overrides, "Config override, section.key=value (repeatable)");

  auto* build = app.add_subcommand("build-dataset", "Build annotation instances and dataset statistics");
  build->fallthrough();

  std::string instances_file;
  auto* stats = app.add_subcommand("stats", "Print dataset statistics for an instances file");
  stats->add_option("--instances", instances_file, "Instances file (default: <out>/instances.jsonl)");
  stats->fallthrough();

  std::string mode = "generate";
  bool dump_condensed = false;
  auto* run = app.add_subcommand("run", "Generate next A&P predictions");
  run->add_option("--mode", mode, "generate or prior-baseline")
      ->check(CLI::IsMember({"generate", "prior-baseline"}))
      ->capture_default_str();
  run->add_option("--instances", instances_file, "Instances file (default: <out>/instances.jsonl)");
  run->add_flag("--dump-condensed", dump_condensed, "Write each instance's condensed chart to <out>/condensed/");
  run->fallthrough();

  std::string predictions_file;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against the gold next A&P");
  evaluate->add_option("--predictions", predictions_file, "Prediction records (output of run)")->required();
  evaluate->add_option("--instances", instances_file, "Instances file (default: <out>/instances.jsonl)");
  evaluate->fallthrough();

  std::vector<std::string> summaries;
  auto* report = app.add_subcommand("report", "Tabulate evaluation summaries");
  report->add_option("summaries", summaries, "eval_*.summary.json files (default: all in <out>)");
  report->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsage;
  }

  cli::Context ctx{std::cout, std::cerr};
  try {
    RunConfig cfg = load_config(config_path, overrides);
    if (!out_dir.empty()) cfg.output_dir = fs::absolute(out_dir);
    if (parallelism > 0) cfg.parallelism = parallelism;
    if (dump_condensed) cfg.dump_condensed = true;
    ctx.level = cli::parse_log_level(log_level.empty() ? cfg.log_level : log_level);
    ctx.resume = resume;
    const fs::path instances = instances_file.empty() ? cli::instances_path(cfg) : fs::path(instances_file);

    if (*build) return cli::cmd_build_dataset(cfg, ctx);
    if (*stats) return cli::cmd_stats(cfg, ctx, instances);
    if (*run) return cli::cmd_run(cfg, ctx, cli::parse_run_mode(mode), instances);
    if (*evaluate) return cli::cmd_evaluate(cfg, ctx, predictions_file, instances);
    if (*report) {
      std::vector<fs::path> paths(summaries.begin(), summaries.end());
      return cli::cmd_report(cfg, ctx, paths);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kUsage;
}
