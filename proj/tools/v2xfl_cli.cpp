// v2xfl: run federated-learning privacy campaigns and inspect their artifacts.
//
//   v2xfl run campaign.yaml [--set federation.rounds=20 ...]
//   v2xfl partition-stats campaign.yaml
//   v2xfl attack-eval runs/exchange/rep_00 [--probe-per-class 100]
//   v2xfl report runs
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "v2xfl/error.hpp"
#include "v2xfl/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

void print_summary(const v2xfl::ComparisonReport& report) {
  write_report_csv(std::cout, report);
}

v2xfl::CampaignConfig load(const std::string& path, const std::vector<std::string>& overrides,
                           const std::optional<std::string>& output,
                           std::optional<std::size_t> threads) {
  auto cfg = v2xfl::load_campaign_config(path, overrides);
  if (output) cfg.output_dir = *output;
  if (threads) cfg.federation.threads = std::max<std::size_t>(1, *threads);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning with V2V data exchange: privacy and convergence campaigns"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> output;
  std::optional<std::size_t> threads;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run every case x repetition of a campaign");
  run->add_option("config", config_path, "Campaign YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config value, e.g. federation.rounds=20");
  run->add_option("-o,--output", output, "Output directory (overrides the config)");
  run->add_option("-j,--threads", threads, "Worker threads for local training");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  auto* stats = app.add_subcommand("partition-stats", "Per-participant class counts, p and x");
  stats->add_option("config", config_path, "Campaign YAML file")->required()->check(CLI::ExistingFile);
  stats->add_option("--set", overrides, "Override a config value");

  std::string run_dir;
  std::optional<std::size_t> probe_per_class;
  std::optional<std::uint64_t> probe_seed;
  std::optional<std::string> csv_path;
  auto* attack = app.add_subcommand("attack-eval", "Re-run the attack on stored checkpoints");
  attack->add_option("run_dir", run_dir, "Run directory <output>/<case>/rep_NN")
      ->required()
      ->check(CLI::ExistingDirectory);
  attack->add_option("--probe-per-class", probe_per_class, "Probe samples per class (0: whole pool)");
  attack->add_option("--probe-seed", probe_seed, "Seed for drawing the probe");
  attack->add_option("--csv", csv_path, "Verdict CSV path (default <run_dir>/attack_eval.csv)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Rebuild the comparison report from traces");
  report->add_option("output_dir", report_dir, "Campaign output directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = load(config_path, overrides, output, threads);
      const auto result = v2xfl::run_campaign(cfg, quiet ? nullptr : &std::cerr);
      print_summary(result);
      std::cerr << "artifacts written to " << cfg.output_dir.string() << '\n';
    } else if (*stats) {
      const auto cfg = load(config_path, overrides, std::nullopt, std::nullopt);
      v2xfl::write_partition_stats(std::cout, v2xfl::partition_stats(cfg));
    } else if (*attack) {
      const fs::path csv_file = csv_path ? fs::path(*csv_path) : fs::path(run_dir) / "attack_eval.csv";
      std::ofstream csv(csv_file, std::ios::binary | std::ios::trunc);
      if (!csv) throw v2xfl::Error(fmt::format("cannot write {}", csv_file.string()));
      const auto result = v2xfl::attack_eval(run_dir, {probe_per_class, probe_seed}, csv);
      std::cout << fmt::format("rounds {}  R tail mean {:.4f}  R max {:.0f}  tie hits {:.2f}\n",
                               result.summary.per_round.size(), result.summary.tail_mean,
                               result.summary.max, result.summary.tail_tie_hits);
      std::cerr << "verdicts written to " << csv_file.string() << '\n';
    } else if (*report) {
      const auto result = v2xfl::report_from_directory(report_dir);
      print_summary(result);
    }
  } catch (const v2xfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
