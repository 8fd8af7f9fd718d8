#include "equinox/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "equinox/errors.hpp"

namespace equinox {

double jain_index(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("jain_index needs at least one value");
  double sum = 0.0, sum_sq = 0.0;
  for (double v : values) {
    sum += v;
    sum_sq += v * v;
  }
  if (sum_sq == 0.0) return 1.0;  // all-zero allocation: equal by convention
  return sum * sum / (static_cast<double>(values.size()) * sum_sq);
}

ServiceDifferenceStats service_difference(const EventLog& log,
                                          const std::vector<ClientSpec>& clients,
                                          double output_weight, double window_s,
                                          double end_s) {
  if (clients.size() < 2) {
    throw ConfigError("service difference is undefined for fewer than 2 clients");
  }
  if (window_s <= 0.0) throw ConfigError("window_s must be > 0");

  std::map<std::string, std::size_t> index;
  std::map<std::string, double> weight;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    index[clients[i].client_id] = i;
    weight[clients[i].client_id] = clients[i].weight;
  }

  // Completion steps in time order (the log is already sorted).
  std::vector<double> service(clients.size(), 0.0);
  ServiceDifferenceStats stats;
  std::size_t entry_idx = 0;
  double sum = 0.0, sum_sq = 0.0;

  const auto sample_diff = [&](double t) {
    const auto [lo, hi] = std::minmax_element(service.begin(), service.end());
    const double d = *hi - *lo;
    stats.series.push_back({t, d});
    stats.max_diff = std::max(stats.max_diff, d);
    sum += d;
    sum_sq += d * d;
  };

  for (double t = window_s; t <= end_s + 1e-12; t += window_s) {
    while (entry_idx < log.entries.size() &&
           log.entries[entry_idx].time_s <= t) {
      const LogEntry& e = log.entries[entry_idx];
      ++entry_idx;
      if (e.event != LogEvent::Completed) continue;
      const auto it = index.find(e.client_id);
      if (it == index.end()) continue;
      service[it->second] +=
          weight[e.client_id] *
          (static_cast<double>(e.input_tokens) +
           output_weight * static_cast<double>(e.output_tokens));
    }
    sample_diff(t);
  }
  if (stats.series.empty()) sample_diff(end_s);

  const double n = static_cast<double>(stats.series.size());
  stats.avg_diff = sum / n;
  stats.var_diff = sum_sq / n - stats.avg_diff * stats.avg_diff;
  if (stats.var_diff < 0.0) stats.var_diff = 0.0;
  return stats;
}

Percentiles percentile_stats(std::vector<double> values) {
  Percentiles p;
  p.count = static_cast<int>(values.size());
  if (values.empty()) return p;
  std::sort(values.begin(), values.end());
  const auto rank = [&](double pct) {
    auto r = static_cast<std::size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(values.size())));
    r = std::clamp<std::size_t>(r, 1, values.size());
    return values[r - 1];
  };
  p.p50 = rank(50.0);
  p.p90 = rank(90.0);
  return p;
}

TtftStats ttft_stats(const EventLog& log) {
  std::map<std::int64_t, double> arrived;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> per_client;
  for (const auto& e : log.entries) {
    if (e.event == LogEvent::Arrived) {
      arrived[e.request_id] = e.time_s;
    } else if (e.event == LogEvent::FirstToken) {
      const auto it = arrived.find(e.request_id);
      if (it == arrived.end()) continue;
      const double ttft = e.time_s - it->second;
      all.push_back(ttft);
      per_client[e.client_id].push_back(ttft);
    }
  }
  TtftStats stats;
  stats.overall = percentile_stats(std::move(all));
  for (auto& [client, values] : per_client) {
    stats.per_client[client] = percentile_stats(std::move(values));
  }
  return stats;
}

namespace {

nlohmann::json percentiles_json(const Percentiles& p) {
  return {{"p50", p.p50}, {"p90", p.p90}, {"count", p.count}};
}

}  // namespace

nlohmann::json SimReport::to_json() const {
  nlohmann::json j;
  j["summary"] = {
      {"max_diff", max_diff},
      {"avg_diff", avg_diff},
      {"var_diff", var_diff},
      {"jain_hf", jain_hf},
      {"jain_ttft_p90", jain_ttft_p90},
      {"throughput_tps", throughput_tps},
      {"mean_gpu_util", mean_gpu_util},
      {"ttft", percentiles_json(ttft_overall)},
      {"latency", percentiles_json(latency_overall)},
      {"sim_end_s", sim_end_s},
      {"completed", completed},
      {"rejected", rejected},
      {"total_completed_tokens", total_completed_tokens},
  };
  j["per_client"] = nlohmann::json::object();
  for (const auto& [client, report] : per_client) {
    j["per_client"][client] = {
        {"accumulated_service", report.accumulated_service},
        {"mean_service_rate", report.mean_service_rate},
        {"ttft", percentiles_json(report.ttft)},
    };
  }
  return j;
}

SimReport build_report(const Trace& trace, const SimResult& result,
                       double output_weight, double window_s) {
  SimReport report;
  report.sim_end_s = result.sim_end_s;
  report.completed = result.completed;
  report.rejected = result.rejected;

  if (trace.clients.size() >= 2) {
    const auto diff = service_difference(result.log, trace.clients,
                                         output_weight, window_s,
                                         result.sim_end_s);
    report.max_diff = diff.max_diff;
    report.avg_diff = diff.avg_diff;
    report.var_diff = diff.var_diff;
    report.diff_series = diff.series;
  }

  report.jain_hf = result.final_hf.empty() ? 1.0 : jain_index(result.final_hf);

  const TtftStats ttft = ttft_stats(result.log);
  report.ttft_overall = ttft.overall;
  std::vector<double> ttft_p90s;
  for (const auto& [client, p] : ttft.per_client) {
    ttft_p90s.push_back(p.p90);
  }
  report.jain_ttft_p90 = ttft_p90s.empty() ? 1.0 : jain_index(ttft_p90s);

  std::vector<double> latencies;
  for (const auto& e : result.log.entries) {
    if (e.event != LogEvent::Completed) continue;
    latencies.push_back(e.latency_s);
    report.total_completed_tokens += e.input_tokens + e.output_tokens;
  }
  report.latency_overall = percentile_stats(std::move(latencies));
  report.throughput_tps =
      result.sim_end_s > 0.0
          ? static_cast<double>(report.total_completed_tokens) / result.sim_end_s
          : 0.0;
  report.mean_gpu_util = result.sim_end_s > 0.0
                             ? result.busy_ms_total / (result.sim_end_s * 1000.0)
                             : 0.0;

  // Per-client service rate series from completion steps.
  std::map<std::string, double> weight;
  for (const auto& c : trace.clients) weight[c.client_id] = c.weight;
  std::map<std::string, ClientReport> per_client;
  for (const auto& c : trace.clients) per_client[c.client_id] = {};
  for (const auto& [client, p] : ttft.per_client) per_client[client].ttft = p;

  std::map<std::string, std::size_t> window_idx;
  const auto n_windows = static_cast<std::size_t>(
      std::max(1.0, std::ceil(result.sim_end_s / window_s - 1e-12)));
  std::map<std::string, std::vector<double>> window_service;
  for (const auto& c : trace.clients) {
    window_service[c.client_id] = std::vector<double>(n_windows, 0.0);
  }
  for (const auto& e : result.log.entries) {
    if (e.event != LogEvent::Completed) continue;
    const double served =
        weight[e.client_id] * (static_cast<double>(e.input_tokens) +
                               output_weight * static_cast<double>(e.output_tokens));
    per_client[e.client_id].accumulated_service += served;
    auto w = static_cast<std::size_t>(e.time_s / window_s);
    if (w >= n_windows) w = n_windows - 1;
    window_service[e.client_id][w] += served;
  }
  for (auto& [client, report_entry] : per_client) {
    const auto& buckets = window_service[client];
    for (std::size_t w = 0; w < buckets.size(); ++w) {
      report_entry.service_rate_series.push_back(
          {window_s * static_cast<double>(w + 1), buckets[w] / window_s});
    }
    report_entry.mean_service_rate =
        result.sim_end_s > 0.0 ? report_entry.accumulated_service / result.sim_end_s
                               : 0.0;
  }
  report.per_client = std::move(per_client);
  return report;
}

}  // namespace equinox
