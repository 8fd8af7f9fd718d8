#include "doctest.h"

#include "equinox/errors.hpp"
#include "equinox/metrics.hpp"
#include "test_util.hpp"

using namespace equinox;
using equinox::testing::make_trace;

namespace {

LogEntry completion(double t, const std::string& client, std::int64_t id,
                    int in, int out) {
  LogEntry e;
  e.time_s = t;
  e.request_id = id;
  e.client_id = client;
  e.event = LogEvent::Completed;
  e.input_tokens = in;
  e.output_tokens = out;
  e.latency_s = 1.0;
  return e;
}

}  // namespace

TEST_CASE("jain index matches hand-computed values and bounds") {
  CHECK(jain_index({4.0, 4.0, 4.0, 4.0}) == 1.0);
  CHECK(jain_index({1.0, 0.0}) == 0.5);
  CHECK(jain_index({1.0, 2.0, 3.0}) == doctest::Approx(36.0 / 42.0).epsilon(1e-12));
  CHECK(jain_index({0.0, 0.0, 0.0}) == 1.0);  // all-zero convention
  CHECK_THROWS_AS(jain_index({}), ConfigError);

  // Scale invariance and range.
  const std::vector<double> values = {0.3, 1.9, 7.2, 2.2};
  const double base = jain_index(values);
  std::vector<double> scaled = values;
  for (double& v : scaled) v *= 1234.5;
  CHECK(jain_index(scaled) == doctest::Approx(base).epsilon(1e-12));
  CHECK(base >= 1.0 / 4.0);
  CHECK(base <= 1.0);
}

TEST_CASE("service difference of identical completions is identically zero") {
  EventLog log;
  for (int k = 0; k < 5; ++k) {
    log.entries.push_back(completion(k + 0.5, "a", 2 * k, 100, 400));
    log.entries.push_back(completion(k + 0.5, "b", 2 * k + 1, 100, 400));
  }
  const Trace trace = make_trace({}, {"a", "b"}, 5.0);
  const auto stats = service_difference(log, trace.clients, 4.0, 1.0, 5.0);
  CHECK(stats.max_diff == 0.0);
  CHECK(stats.avg_diff == 0.0);
  CHECK(stats.var_diff == 0.0);
  CHECK(stats.series.size() == 5);
}

TEST_CASE("one-sided completion yields the hand-computed difference") {
  EventLog log;
  log.entries.push_back(completion(0.25, "a", 0, 100, 400));
  const Trace trace = make_trace({}, {"a", "b"}, 1.0);
  const auto stats = service_difference(log, trace.clients, 4.0, 1.0, 1.0);
  CHECK(stats.max_diff == doctest::Approx(1700.0));  // 100 + 4*400
  CHECK(stats.avg_diff == doctest::Approx(1700.0));

  const Trace solo = make_trace({}, {"a"}, 1.0);
  CHECK_THROWS_AS(service_difference(log, solo.clients, 4.0, 1.0, 1.0),
                  ConfigError);
}

TEST_CASE("client weights scale the accumulated service") {
  EventLog log;
  log.entries.push_back(completion(0.5, "a", 0, 100, 100));
  log.entries.push_back(completion(0.5, "b", 1, 100, 100));
  Trace trace = make_trace({}, {"a", "b"}, 1.0);
  trace.clients[1].weight = 2.0;
  const auto stats = service_difference(log, trace.clients, 4.0, 1.0, 1.0);
  CHECK(stats.max_diff == doctest::Approx(500.0));  // (2-1) * (100+400)
}

TEST_CASE("ttft percentiles use nearest rank") {
  EventLog log;
  for (int k = 1; k <= 10; ++k) {
    LogEntry arrived;
    arrived.time_s = 0.0;
    arrived.request_id = k;
    arrived.client_id = "a";
    arrived.event = LogEvent::Arrived;
    log.entries.push_back(arrived);
    LogEntry first;
    first.time_s = static_cast<double>(k);
    first.request_id = k;
    first.client_id = "a";
    first.event = LogEvent::FirstToken;
    log.entries.push_back(first);
  }
  const TtftStats stats = ttft_stats(log);
  CHECK(stats.overall.p50 == 5.0);
  CHECK(stats.overall.p90 == 9.0);
  CHECK(stats.per_client.at("a").p90 == 9.0);

  EventLog single;
  single.entries.push_back(log.entries[0]);
  single.entries.push_back(log.entries[1]);
  const TtftStats one = ttft_stats(single);
  CHECK(one.overall.p50 == one.overall.p90);
  CHECK(one.overall.p50 == 1.0);

  EventLog equal;
  for (int k = 1; k <= 4; ++k) {
    LogEntry arrived;
    arrived.time_s = 0.0;
    arrived.request_id = k;
    arrived.client_id = "a";
    arrived.event = LogEvent::Arrived;
    equal.entries.push_back(arrived);
    LogEntry first = arrived;
    first.time_s = 2.5;
    first.event = LogEvent::FirstToken;
    equal.entries.push_back(first);
  }
  const TtftStats flat = ttft_stats(equal);
  CHECK(flat.overall.p50 == flat.overall.p90);
}

TEST_CASE("report totals reconcile with the event log") {
  const Trace trace = generate_scenario(ScenarioPreset::Balanced, 3, 20.0);
  EngineConfig cfg;
  cfg.policy.kind = PolicyKind::Equinox;
  cfg.max_sim_time_s = 3600.0;
  OraclePredictor oracle;
  const SimResult result = run_simulation(
      trace, cfg, oracle, build_profile(cfg.perf, default_bucket_bounds(), 1));
  const SimReport report = build_report(trace, result, 4.0, 1.0);

  long long tokens = 0;
  for (const auto& e : result.log.entries) {
    if (e.event == LogEvent::Completed) tokens += e.input_tokens + e.output_tokens;
  }
  CHECK(report.total_completed_tokens == tokens);
  CHECK(report.throughput_tps * report.sim_end_s ==
        doctest::Approx(static_cast<double>(tokens)).epsilon(1e-9));
  CHECK(report.jain_hf >= 0.5);
  CHECK(report.jain_hf <= 1.0);
  CHECK(report.mean_gpu_util > 0.0);
  CHECK(report.mean_gpu_util <= 1.0);

  double service_sum = 0.0;
  for (const auto& [client, rep] : report.per_client) {
    service_sum += rep.accumulated_service;
  }
  double expected = 0.0;
  for (const auto& e : result.log.entries) {
    if (e.event == LogEvent::Completed) {
      expected += e.input_tokens + 4.0 * e.output_tokens;
    }
  }
  CHECK(service_sum == doctest::Approx(expected).epsilon(1e-9));
}
