#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "equinox/engine.hpp"
#include "equinox/gpu_model.hpp"
#include "equinox/scheduler.hpp"

#include "json.hpp"

namespace equinox {

struct ScenarioConfig {
  std::string preset;      // one of the named presets, or
  std::string trace_path;  // a CSV trace to replay (exactly one of the two)
  double duration_s = 60.0;
  double tag_noise = 0.2;
  std::map<std::string, double> weights;  // optional per-client overrides
};

struct PredictorConfig {
  std::string kind = "oracle";  // oracle | noisy_oracle | single_proxy | mope
  double target_l1 = 33.0;      // noisy_oracle
  int experts = 3;              // mope: 1, 3, or 5 partitions
  std::string corpus = "builtin";  // mope/single_proxy training corpus
  int corpus_size = 10000;
  std::uint64_t corpus_seed = 7;

  std::string label() const;
  /// Percentile boundaries implied by the expert count (e.g. 3 -> {33, 66}).
  std::vector<double> bucket_percentiles() const;
};

struct GridCell {
  std::string name;
  PolicySpec policy;
  PredictorConfig predictor;
};

/// Fully resolved experiment description, parsed strictly from one JSON
/// document: unknown keys and out-of-range values are rejected up front.
struct RunConfig {
  ScenarioConfig scenario;
  PolicySpec policy;
  PredictorConfig predictor;
  PerfParams perf;
  double report_window_s = 1.0;
  double max_sim_time_s = 0.0;  // 0 = trace duration
  double ema_alpha = 0.2;
  bool backfill = false;
  double prediction_overhead_ms = 0.0;
  std::vector<int> profile_bucket_bounds = default_bucket_bounds();
  int profile_reference_input = 1;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  std::vector<GridCell> grid;     // ablation
  std::vector<double> alphas;     // alpha sweep

  EngineConfig engine_config(const PolicySpec& policy_spec) const;
  nlohmann::json resolved() const;  // defaults materialized, for provenance
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

}  // namespace equinox
