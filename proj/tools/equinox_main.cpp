#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "equinox/errors.hpp"
#include "equinox/experiments.hpp"
#include "equinox/run_config.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  bool write_log = false;
};

equinox::RunConfig load_with_overrides(const CliOptions& opts) {
  equinox::RunConfig cfg = equinox::load_run_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
  return cfg;
}

void add_common(CLI::App* cmd, CliOptions& opts, bool needs_config) {
  if (needs_config) {
    cmd->add_option("--config", opts.config_path, "Run config (JSON)")
        ->required();
  }
  cmd->add_option("--out", opts.out_dir, "Output directory override");
  cmd->add_option("--seed", opts.seeds,
                  "Seed list override (repeat or comma-separate)")
      ->delimiter(',');
  cmd->add_option("--jobs", opts.jobs, "Parallel simulations")->check(CLI::PositiveNumber);
  cmd->add_flag("--log", opts.write_log, "Write per-run event logs (NDJSON)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware multi-tenant LLM serving simulator"};
  app.require_subcommand(1);

  CliOptions opts;
  CLI::App* run = app.add_subcommand("run", "Execute one configuration");
  add_common(run, opts, true);
  CLI::App* ablation =
      app.add_subcommand("ablation", "Run a scheduler x predictor grid");
  add_common(ablation, opts, true);
  CLI::App* sweep =
      app.add_subcommand("sweep-alpha", "Sweep the alpha/beta balance");
  add_common(sweep, opts, true);
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Emit the GPU profile CSV");
  add_common(calibrate, opts, true);

  std::string summary_dir;
  CLI::App* summary =
      app.add_subcommand("summary", "Print a table for reports in a directory");
  summary->add_option("--out", summary_dir, "Directory holding report.json files")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (summary->parsed()) {
      equinox::print_summary_table(summary_dir, std::cout);
      return 0;
    }
    equinox::RunConfig cfg = load_with_overrides(opts);
    equinox::ExperimentRunner runner(std::move(cfg));

    if (run->parsed()) {
      const auto batch = equinox::run_batch(runner, opts.jobs);
      equinox::write_run_outputs(runner, batch, opts.write_log);
      std::cout << batch.aggregate.at("means").dump(2) << '\n';
      std::cout << "wrote " << runner.config().out_dir << '\n';
    } else if (ablation->parsed()) {
      const auto result = equinox::run_ablation(runner, opts.jobs);
      equinox::write_ablation_outputs(runner, result);
      equinox::print_summary_table(runner.config().out_dir, std::cout);
      std::cout << "wrote " << runner.config().out_dir << '\n';
    } else if (sweep->parsed()) {
      const auto result = equinox::run_sweep_alpha(runner, opts.jobs);
      equinox::write_sweep_outputs(runner, result);
      std::cout << "alpha,jain_ttft_p90_norm,throughput_norm\n";
      for (const auto& p : result.points) {
        std::printf("%.2f,%.6f,%.6f\n", p.alpha, p.jain_norm, p.throughput_norm);
      }
      std::cout << "wrote " << runner.config().out_dir << '\n';
    } else if (calibrate->parsed()) {
      equinox::write_calibration_outputs(runner.config(), std::cout);
    }
  } catch (const equinox::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const equinox::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
