#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "equinox/engine.hpp"
#include "equinox/metrics.hpp"
#include "equinox/run_config.hpp"

namespace equinox {

struct SeedRun {
  std::uint64_t seed = 0;
  std::string trace_hash;
  SimReport report;
  SimResult result;
};

/// Shared context for a batch of runs: traces are generated once per seed and
/// predictor models trained once per distinct configuration, so grid cells
/// sharing a seed consume the identical trace.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const GpuProfile& initial_profile() const { return profile_; }

  /// Pre-generates traces and trains predictor models for the given cells.
  /// Must be called before execute() when running in parallel.
  void prepare(const std::vector<GridCell>& cells);

  const Trace& trace_for_seed(std::uint64_t seed);
  std::unique_ptr<Predictor> make_predictor(const PredictorConfig& pc,
                                            std::uint64_t seed) const;
  /// Trained model JSON for mope cells (empty when not applicable).
  std::string predictor_model_json(const PredictorConfig& pc) const;

  SeedRun execute(const PolicySpec& policy, const PredictorConfig& predictor,
                  std::uint64_t seed);

 private:
  std::string model_key(const PredictorConfig& pc) const;
  void ensure_models(const PredictorConfig& pc);

  RunConfig cfg_;
  GpuProfile profile_;
  std::map<std::uint64_t, Trace> traces_;
  std::map<std::string, MopeModel> mope_models_;
  std::map<std::string, ExpertModel> proxy_tables_;
};

/// Runs fn(0..n-1) on up to `jobs` worker threads; rethrows the first error.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

struct RunBatchResult {
  std::vector<SeedRun> runs;
  nlohmann::json aggregate;
};

struct CellOutcome {
  GridCell cell;
  std::vector<SeedRun> runs;
  nlohmann::json means;
};

struct AblationResult {
  std::vector<CellOutcome> cells;
  nlohmann::json table;
};

struct SweepPoint {
  double alpha = 0.0;
  double jain_ttft_p90 = 0.0;
  double throughput_tps = 0.0;
  double jain_norm = 0.0;
  double throughput_norm = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
};

RunBatchResult run_batch(ExperimentRunner& runner, int jobs);
AblationResult run_ablation(ExperimentRunner& runner, int jobs);
SweepResult run_sweep_alpha(ExperimentRunner& runner, int jobs);

/// File writers used by the CLI. All outputs embed the resolved config and
/// per-seed trace hashes for provenance.
void write_run_outputs(const ExperimentRunner& runner, const RunBatchResult& batch,
                       bool write_event_log);
void write_ablation_outputs(const ExperimentRunner& runner,
                            const AblationResult& ablation);
void write_sweep_outputs(const ExperimentRunner& runner, const SweepResult& sweep);
void write_calibration_outputs(const RunConfig& cfg, std::ostream& echo);

/// Prints the fixed-order summary table for every report.json under `dir`.
int print_summary_table(const std::string& dir, std::ostream& out);

}  // namespace equinox
