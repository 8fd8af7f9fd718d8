#include "equinox/engine.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "equinox/errors.hpp"

#include "json.hpp"

namespace equinox {

void EngineConfig::validate() const {
  perf.validate();
  policy.equinox.validate();
  if (report_window_s <= 0.0) throw ConfigError("report_window_s must be > 0");
  if (max_sim_time_s < 0.0) throw ConfigError("max_sim_time_s must be >= 0");
  if (ema_alpha <= 0.0 || ema_alpha > 1.0) {
    throw ConfigError("ema_alpha must lie in (0, 1]");
  }
  if (prediction_overhead_ms < 0.0) {
    throw ConfigError("prediction_overhead_ms must be >= 0");
  }
}

std::string_view log_event_name(LogEvent e) {
  switch (e) {
    case LogEvent::Arrived:
      return "arrived";
    case LogEvent::Admitted:
      return "admitted";
    case LogEvent::FirstToken:
      return "first_token";
    case LogEvent::Completed:
      return "completed";
    case LogEvent::Rejected:
      return "rejected";
  }
  return "unknown";
}

std::string EventLog::to_ndjson() const {
  std::ostringstream out;
  for (const auto& e : entries) {
    nlohmann::json j;
    j["time_s"] = e.time_s;
    j["request_id"] = e.request_id;
    j["client_id"] = e.client_id;
    j["event"] = log_event_name(e.event);
    switch (e.event) {
      case LogEvent::Arrived:
        j["input_tokens"] = e.input_tokens;
        break;
      case LogEvent::Admitted:
        j["predicted_output_tokens"] = e.predicted_output_tokens;
        j["predicted_latency_ms"] = e.predicted_latency_ms;
        break;
      case LogEvent::FirstToken:
        break;
      case LogEvent::Completed:
        j["input_tokens"] = e.input_tokens;
        j["output_tokens"] = e.output_tokens;
        j["latency_s"] = e.latency_s;
        j["tps"] = e.tps;
        j["gpu_util"] = e.gpu_util;
        break;
      case LogEvent::Rejected:
        j["input_tokens"] = e.input_tokens;
        break;
    }
    out << j.dump() << '\n';
  }
  return out.str();
}

namespace {

struct QueuedRequest {
  Request req;
  PredictionRecord prediction;
};

struct ResidentMeta {
  Request req;
  PredictionRecord prediction;
  std::size_t client = 0;
  double admit_s = 0.0;
  double busy_at_admit_ms = 0.0;
  double overhead_at_admit_ms = 0.0;
};

class SimulationRun {
 public:
  SimulationRun(const Trace& trace, const EngineConfig& config,
                Predictor& predictor, const GpuProfile& initial_profile)
      : trace_(trace),
        cfg_(config),
        predictor_(predictor),
        policy_(config.policy, roster(trace)),
        queues_(trace.clients.size()),
        running_count_(trace.clients.size(), 0) {
    cfg_.validate();
    if (initial_profile.empty()) {
      throw ConfigError("engine needs a non-empty GPU profile");
    }
    result_.profile = initial_profile;
    for (std::size_t i = 0; i < trace_.clients.size(); ++i) {
      client_index_[trace_.clients[i].client_id] = i;
    }
    for (const auto& r : trace_.requests) {
      if (client_index_.find(r.client_id) == client_index_.end()) {
        throw ConfigError("request " + std::to_string(r.id) +
                          " references unknown client '" + r.client_id + "'");
      }
    }
  }

  SimResult run() {
    const double max_sim =
        cfg_.max_sim_time_s > 0.0 ? cfg_.max_sim_time_s : trace_.duration_s;

    while (now_ < max_sim) {
      drain_arrivals(now_);

      if (batch_.members.empty() && total_queued_ == 0) {
        if (arrival_idx_ >= trace_.requests.size()) break;
        const double next_t = eligible_at(trace_.requests[arrival_idx_]);
        if (next_t >= max_sim) break;
        advance_clock(now_, next_t, 0.0, 0.0);
        now_ = next_t;
        drain_arrivals(now_);
      }

      const int new_prefill = admit_requests();

      if (batch_.members.empty()) continue;

      run_iteration(new_prefill);
    }

    flush_window();
    result_.sim_end_s = now_;
    result_.final_clients = policy_.clients();
    result_.final_hf = metric_hf(result_.final_clients, cfg_.policy.equinox);
    result_.busy_ms_total = busy_cum_ms_;
    result_.overhead_ms_total = overhead_cum_ms_;
    result_.counter_clamps = policy_.counter_clamps();
    return std::move(result_);
  }

 private:
  static std::vector<ClientState> roster(const Trace& trace) {
    std::vector<ClientState> clients;
    clients.reserve(trace.clients.size());
    for (const auto& spec : trace.clients) {
      ClientState c;
      c.client_id = spec.client_id;
      c.weight = spec.weight;
      clients.push_back(std::move(c));
    }
    return clients;
  }

  // A request becomes schedulable once its prediction cost has elapsed.
  double eligible_at(const Request& req) const {
    return req.arrival_time_s + cfg_.prediction_overhead_ms / 1000.0;
  }

  void drain_arrivals(double upto) {
    while (arrival_idx_ < trace_.requests.size() &&
           eligible_at(trace_.requests[arrival_idx_]) <= upto) {
      const Request& req = trace_.requests[arrival_idx_];
      ++arrival_idx_;
      const std::size_t ci = client_index_.at(req.client_id);

      // Predictions attach at arrival, against the map as of now.
      const int predicted = std::max(1, predictor_.predict(req));
      QueuedRequest queued{req, map_metrics(predicted, result_.profile)};

      if (queues_[ci].empty() && running_count_[ci] == 0) {
        policy_.on_activated(ci);
      }
      queues_[ci].push_back(std::move(queued));
      ++total_queued_;
      policy_.set_backlogged(ci, true);

      LogEntry e;
      e.time_s = req.arrival_time_s;
      e.request_id = req.id;
      e.client_id = req.client_id;
      e.event = LogEvent::Arrived;
      e.input_tokens = req.input_tokens;
      result_.log.entries.push_back(std::move(e));
    }
  }

  void pop_head(std::size_t ci) {
    queues_[ci].pop_front();
    --total_queued_;
    if (queues_[ci].empty()) policy_.set_backlogged(ci, false);
  }

  // Admits min-score head requests while they fit. Returns the total number
  // of prompt tokens entering prefill this iteration.
  int admit_requests() {
    int new_prefill = 0;
    std::set<std::size_t> skipped;
    while (true) {
      std::vector<HeadCandidate> candidates;
      for (std::size_t i = 0; i < queues_.size(); ++i) {
        if (queues_[i].empty() || skipped.count(i) != 0) continue;
        candidates.push_back({i, queues_[i].front().req.arrival_time_s});
      }
      const auto choice = policy_.select_next(candidates);
      if (!choice) break;
      const std::size_t ci = *choice;
      const QueuedRequest& head = queues_[ci].front();
      const int in = head.req.input_tokens;
      const int predicted = head.prediction.predicted_output_tokens;

      if (!fits_alone(in, predicted, cfg_.perf)) {
        LogEntry e;
        e.time_s = now_;
        e.request_id = head.req.id;
        e.client_id = head.req.client_id;
        e.event = LogEvent::Rejected;
        e.input_tokens = in;
        result_.log.entries.push_back(std::move(e));
        ++result_.rejected;
        pop_head(ci);
        continue;
      }
      if (!can_fit(batch_, in, predicted, cfg_.perf)) {
        if (cfg_.backfill) {
          skipped.insert(ci);
          continue;
        }
        break;
      }

      QueuedRequest admitted = head;
      pop_head(ci);

      batch_.members.push_back(
          {admitted.req.id, admitted.req.input_tokens, 0, predicted});
      batch_.composition_changed = true;
      meta_.push_back({admitted.req, admitted.prediction, ci, now_,
                       busy_cum_ms_, overhead_cum_ms_});
      ++running_count_[ci];
      newly_admitted_.push_back(admitted.req.id);
      new_prefill += admitted.req.input_tokens;

      ScheduleContext ctx;
      ctx.now_s = now_;
      ctx.wait_s = now_ - admitted.req.arrival_time_s;
      ctx.prediction = admitted.prediction;
      policy_.on_admit(ci, admitted.req, ctx);

      LogEntry e;
      e.time_s = now_;
      e.request_id = admitted.req.id;
      e.client_id = admitted.req.client_id;
      e.event = LogEvent::Admitted;
      e.predicted_output_tokens = predicted;
      e.predicted_latency_ms = admitted.prediction.predicted_latency_ms;
      result_.log.entries.push_back(std::move(e));
    }
    return new_prefill;
  }

  void run_iteration(int new_prefill) {
    const double iter_ms = iteration_time_ms(batch_, new_prefill, cfg_.perf);
    const double overhead_ms =
        batch_.composition_changed ? cfg_.perf.refresh_ms : 0.0;
    const double busy_ms = iter_ms - overhead_ms;
    const double t_end = now_ + iter_ms / 1000.0;

    advance_clock(now_, t_end, busy_ms, overhead_ms);
    now_ = t_end;
    batch_.composition_changed = false;

    // One decode token per resident request; admissions this round produce
    // their first token at the end of this (prefill) iteration.
    std::vector<long long> tokens_per_client(queues_.size(), 0);
    for (std::size_t i = 0; i < batch_.members.size(); ++i) {
      batch_.members[i].generated += 1;
      tokens_per_client[meta_[i].client] += 1;
    }
    for (std::size_t i = 0; i < tokens_per_client.size(); ++i) {
      if (tokens_per_client[i] > 0) {
        policy_.on_tokens(i, tokens_per_client[i]);
      }
    }

    const long long resident = batch_.resident_kv_tokens();
    result_.max_resident_kv_tokens =
        std::max(result_.max_resident_kv_tokens, resident);
    if (static_cast<double>(resident) * cfg_.perf.mem_per_token_bytes >
        cfg_.perf.mem_capacity_bytes) {
      throw EngineError("KV memory bound violated: " + std::to_string(resident) +
                        " resident tokens exceed capacity");
    }

    // Arrivals that landed during the iteration enter the queues (and the
    // log) before this iteration's token events.
    drain_arrivals(now_);

    for (std::int64_t id : newly_admitted_) {
      for (std::size_t i = 0; i < batch_.members.size(); ++i) {
        if (batch_.members[i].request_id != id) continue;
        LogEntry e;
        e.time_s = now_;
        e.request_id = id;
        e.client_id = meta_[i].req.client_id;
        e.event = LogEvent::FirstToken;
        result_.log.entries.push_back(std::move(e));
        break;
      }
    }
    newly_admitted_.clear();

    complete_finished();
  }

  void complete_finished() {
    std::size_t i = 0;
    while (i < batch_.members.size()) {
      if (batch_.members[i].generated < meta_[i].req.true_output_tokens) {
        ++i;
        continue;
      }
      const ResidentMeta meta = meta_[i];
      const Request& req = meta.req;

      RequestActuals actuals;
      actuals.output_tokens = batch_.members[i].generated;
      actuals.latency_s = now_ - req.arrival_time_s;
      actuals.exec_s = now_ - meta.admit_s;
      actuals.tps =
          (static_cast<double>(req.input_tokens) + actuals.output_tokens) /
          actuals.exec_s;
      const double busy_span = busy_cum_ms_ - meta.busy_at_admit_ms;
      const double overhead_span = overhead_cum_ms_ - meta.overhead_at_admit_ms;
      actuals.gpu_util = busy_span / (busy_span + overhead_span);

      LogEntry e;
      e.time_s = now_;
      e.request_id = req.id;
      e.client_id = req.client_id;
      e.event = LogEvent::Completed;
      e.input_tokens = req.input_tokens;
      e.output_tokens = actuals.output_tokens;
      e.latency_s = actuals.latency_s;
      e.tps = actuals.tps;
      e.gpu_util = actuals.gpu_util;
      result_.log.entries.push_back(std::move(e));
      ++result_.completed;

      policy_.on_complete(meta.client, req, actuals);
      ObservedMetrics observed;
      observed.output_tokens = actuals.output_tokens;
      observed.latency_ms = actuals.latency_s * 1000.0;
      observed.gpu_util = actuals.gpu_util;
      observed.tps = actuals.tps;
      update_map(result_.profile, observed, cfg_.ema_alpha);

      --running_count_[meta.client];
      batch_.members.erase(batch_.members.begin() +
                           static_cast<std::ptrdiff_t>(i));
      meta_.erase(meta_.begin() + static_cast<std::ptrdiff_t>(i));
      batch_.composition_changed = true;
    }
  }

  // Splits the span's busy/overhead time across reporting windows pro rata
  // and emits one GPU + counter sample per closed window.
  void advance_clock(double t0, double t1, double busy_ms, double overhead_ms) {
    busy_cum_ms_ += busy_ms;
    overhead_cum_ms_ += overhead_ms;
    if (t1 <= t0) return;
    const double span = t1 - t0;
    double t = t0;
    while (t < t1) {
      const double window_end = window_start_ + cfg_.report_window_s;
      const double cut = std::min(t1, window_end);
      const double frac = (cut - t) / span;
      window_busy_ms_ += busy_ms * frac;
      window_overhead_ms_ += overhead_ms * frac;
      if (cut == window_end) {
        emit_window_samples(window_end, cfg_.report_window_s);
        window_start_ = window_end;
        window_busy_ms_ = 0.0;
        window_overhead_ms_ = 0.0;
      }
      t = cut;
    }
  }

  void flush_window() {
    if (now_ > window_start_) {
      emit_window_samples(now_, now_ - window_start_);
      window_busy_ms_ = 0.0;
      window_overhead_ms_ = 0.0;
    }
  }

  void emit_window_samples(double time_s, double window_len_s) {
    GpuWindowSample g;
    g.time_s = time_s;
    g.busy_ms = window_busy_ms_;
    g.overhead_ms = window_overhead_ms_;
    g.gpu_util = window_len_s > 0.0 ? window_busy_ms_ / (window_len_s * 1000.0)
                                    : 0.0;
    result_.gpu_series.push_back(g);

    const auto& clients = policy_.clients();
    const std::vector<double> hf = metric_hf(clients, cfg_.policy.equinox);
    for (std::size_t i = 0; i < clients.size(); ++i) {
      CounterSample s;
      s.time_s = time_s;
      s.client_index = i;
      s.ufc = clients[i].ufc;
      s.rfc = clients[i].rfc;
      s.hf = hf[i];
      s.service_cum = clients[i].accumulated_service;
      result_.counter_series.push_back(s);
    }
  }

  const Trace& trace_;
  EngineConfig cfg_;
  Predictor& predictor_;
  SchedulerPolicy policy_;

  std::vector<std::deque<QueuedRequest>> queues_;
  std::vector<int> running_count_;
  std::size_t total_queued_ = 0;
  BatchState batch_;
  std::vector<ResidentMeta> meta_;
  std::vector<std::int64_t> newly_admitted_;
  std::map<std::string, std::size_t> client_index_;

  double now_ = 0.0;
  std::size_t arrival_idx_ = 0;
  double busy_cum_ms_ = 0.0;
  double overhead_cum_ms_ = 0.0;
  double window_start_ = 0.0;
  double window_busy_ms_ = 0.0;
  double window_overhead_ms_ = 0.0;

  SimResult result_;
};

}  // namespace

SimResult run_simulation(const Trace& trace, const EngineConfig& config,
                         Predictor& predictor,
                         const GpuProfile& initial_profile) {
  SimulationRun run(trace, config, predictor, initial_profile);
  return run.run();
}

RequestActuals measure_actuals(const EventLog& log, std::int64_t request_id) {
  double arrived = -1.0, admitted = -1.0, completed = -1.0;
  int input_tokens = 0;
  RequestActuals actuals;
  for (const auto& e : log.entries) {
    if (e.request_id != request_id) continue;
    switch (e.event) {
      case LogEvent::Arrived:
        arrived = e.time_s;
        input_tokens = e.input_tokens;
        break;
      case LogEvent::Admitted:
        admitted = e.time_s;
        break;
      case LogEvent::Completed:
        completed = e.time_s;
        actuals.output_tokens = e.output_tokens;
        actuals.gpu_util = e.gpu_util;
        break;
      default:
        break;
    }
  }
  if (arrived < 0.0 || admitted < 0.0 || completed < 0.0) {
    throw EngineError("request " + std::to_string(request_id) +
                      " has no completed lifecycle in the log");
  }
  actuals.latency_s = completed - arrived;
  actuals.exec_s = completed - admitted;
  actuals.tps = (static_cast<double>(input_tokens) + actuals.output_tokens) /
                actuals.exec_s;
  return actuals;
}

}  // namespace equinox
