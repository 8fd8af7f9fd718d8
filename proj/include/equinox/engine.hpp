#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "equinox/gpu_model.hpp"
#include "equinox/predictor.hpp"
#include "equinox/scheduler.hpp"
#include "equinox/workload.hpp"

namespace equinox {

struct EngineConfig {
  PerfParams perf;
  PolicySpec policy;
  double report_window_s = 1.0;
  /// Simulated-time cap. Zero means "trace duration": metrics then cover the
  /// arrival window, mirroring a fixed measurement horizon; in-flight work at
  /// the cap stays incomplete.
  double max_sim_time_s = 0.0;
  double ema_alpha = 0.2;  // feedback rate for profile refresh
  /// When the selected head does not fit, try the next client instead of
  /// stalling admissions. Off by default.
  bool backfill = false;
  /// Per-request prediction cost added to queue eligibility. Zero by
  /// default: prediction is off the simulated critical path.
  double prediction_overhead_ms = 0.0;

  void validate() const;
};

enum class LogEvent { Arrived, Admitted, FirstToken, Completed, Rejected };
std::string_view log_event_name(LogEvent e);

struct LogEntry {
  double time_s = 0.0;
  std::int64_t request_id = -1;
  std::string client_id;
  LogEvent event = LogEvent::Arrived;
  // Payload fields; which ones are meaningful depends on the event.
  int input_tokens = 0;             // Arrived, Completed
  int output_tokens = 0;            // Completed (actual)
  int predicted_output_tokens = 0;  // Admitted
  double predicted_latency_ms = 0.0;  // Admitted
  double latency_s = 0.0;           // Completed: completed - arrived
  double tps = 0.0;                 // Completed
  double gpu_util = 0.0;            // Completed: residency-window utilization
};

/// Append-only, time-ordered record of everything a run did.
struct EventLog {
  std::vector<LogEntry> entries;

  std::string to_ndjson() const;
};

struct CounterSample {
  double time_s = 0.0;
  std::size_t client_index = 0;
  double ufc = 0.0;
  double rfc = 0.0;
  double hf = 0.0;
  double service_cum = 0.0;
};

struct GpuWindowSample {
  double time_s = 0.0;   // window end
  double gpu_util = 0.0; // busy / (busy + overhead + idle)
  double busy_ms = 0.0;
  double overhead_ms = 0.0;
};

struct SimResult {
  EventLog log;
  std::vector<CounterSample> counter_series;
  std::vector<GpuWindowSample> gpu_series;
  std::vector<ClientState> final_clients;
  std::vector<double> final_hf;  // reporting HF per client at end of run
  GpuProfile profile;            // feedback-updated map after the run
  double sim_end_s = 0.0;
  double busy_ms_total = 0.0;
  double overhead_ms_total = 0.0;
  long long max_resident_kv_tokens = 0;
  std::int64_t completed = 0;
  std::int64_t rejected = 0;
  std::int64_t counter_clamps = 0;
};

/// Single-threaded discrete-event loop: drains arrivals into per-client FIFO
/// queues, admits min-score head requests while they fit, advances simulated
/// time by the batch iteration cost, and feeds actual metrics back into the
/// counters and the profile. Deterministic given (trace, config, predictor).
SimResult run_simulation(const Trace& trace, const EngineConfig& config,
                         Predictor& predictor, const GpuProfile& initial_profile);

/// Reconstructs a completed request's measured metrics from the event log.
RequestActuals measure_actuals(const EventLog& log, std::int64_t request_id);

}  // namespace equinox
