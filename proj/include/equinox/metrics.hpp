#pragma once

#include <map>
#include <string>
#include <vector>

#include "equinox/engine.hpp"
#include "equinox/workload.hpp"

#include "json.hpp"

namespace equinox {

/// Jain's fairness index (sum x)^2 / (n * sum x^2), in [1/n, 1].
/// An all-zero allocation is defined as perfectly fair (1.0).
double jain_index(const std::vector<double>& values);

struct SeriesPoint {
  double time_s = 0.0;
  double value = 0.0;
};

struct ServiceDifferenceStats {
  double max_diff = 0.0;
  double avg_diff = 0.0;
  double var_diff = 0.0;  // population variance of the sampled series
  std::vector<SeriesPoint> series;
};

/// Accumulated weighted service per client is stepped on each completion by
/// weight * (in + output_weight * out); the difference series samples
/// max_i,j |S_i - S_j| once per window up to end_s. Needs >= 2 clients.
ServiceDifferenceStats service_difference(const EventLog& log,
                                          const std::vector<ClientSpec>& clients,
                                          double output_weight, double window_s,
                                          double end_s);

struct Percentiles {
  double p50 = 0.0;
  double p90 = 0.0;
  int count = 0;
};

/// Nearest-rank percentiles (no interpolation).
Percentiles percentile_stats(std::vector<double> values);

struct TtftStats {
  Percentiles overall;
  std::map<std::string, Percentiles> per_client;
};

/// Time to first token (first_token - arrived) percentiles.
TtftStats ttft_stats(const EventLog& log);

struct ClientReport {
  double accumulated_service = 0.0;
  double mean_service_rate = 0.0;  // weighted tokens per second
  Percentiles ttft;
  std::vector<SeriesPoint> service_rate_series;
};

/// Everything the evaluation wants from one run.
struct SimReport {
  double max_diff = 0.0;
  double avg_diff = 0.0;
  double var_diff = 0.0;
  double jain_hf = 0.0;        // Jain over per-client HF at end of run
  double jain_ttft_p90 = 0.0;  // Jain over per-client p90 TTFT
  double throughput_tps = 0.0; // completed (in + out) tokens per second
  double mean_gpu_util = 0.0;
  Percentiles ttft_overall;
  Percentiles latency_overall;  // end-to-end latency of completed requests
  std::map<std::string, ClientReport> per_client;
  std::vector<SeriesPoint> diff_series;
  double sim_end_s = 0.0;
  std::int64_t completed = 0;
  std::int64_t rejected = 0;
  long long total_completed_tokens = 0;  // in + out over completed requests

  nlohmann::json to_json() const;
};

SimReport build_report(const Trace& trace, const SimResult& result,
                       double output_weight, double window_s);

}  // namespace equinox
