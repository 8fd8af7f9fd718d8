#include "doctest.h"

#include <cmath>

#include "equinox/errors.hpp"
#include "equinox/scheduler.hpp"

using namespace equinox;

namespace {

Request make_request(std::int64_t id, int in, double arrival = 0.0) {
  Request r;
  r.id = id;
  r.client_id = "c";
  r.arrival_time_s = arrival;
  r.input_tokens = in;
  r.true_output_tokens = 1;
  return r;
}

ScheduleContext make_ctx(int predicted_out, double wait_s,
                         double predicted_latency_ms, double tps = 0.0,
                         double util = 0.0) {
  ScheduleContext ctx;
  ctx.wait_s = wait_s;
  ctx.prediction.predicted_output_tokens = predicted_out;
  ctx.prediction.predicted_latency_ms = predicted_latency_ms;
  ctx.prediction.predicted_tps = tps;
  ctx.prediction.predicted_gpu_util = util;
  return ctx;
}

std::vector<ClientState> two_clients(double ufc1, double ufc2, double rfc1,
                                     double rfc2) {
  std::vector<ClientState> clients(2);
  clients[0].client_id = "c1";
  clients[0].ufc = ufc1;
  clients[0].rfc = rfc1;
  clients[0].backlogged = true;
  clients[1].client_id = "c2";
  clients[1].ufc = ufc2;
  clients[1].rfc = rfc2;
  clients[1].backlogged = true;
  return clients;
}

}  // namespace

TEST_CASE("ufc increment matches hand-computed values") {
  EquinoxParams params;  // delta=0.1, output_weight=4
  const Request req = make_request(0, 100);

  // (100 + 4*400) / (1 + 0.1*0) = 1700
  CHECK(ufc_increment(req, make_ctx(400, 0.0, 0.0), 1.0, params) ==
        doctest::Approx(1700.0).epsilon(1e-12));
  // wait 5 s + predicted 5 s: 1700 / (1 + 0.1*10) = 850
  CHECK(ufc_increment(req, make_ctx(400, 5.0, 5000.0), 1.0, params) ==
        doctest::Approx(850.0).epsilon(1e-12));

  EquinoxParams no_delta = params;
  no_delta.delta = 0.0;
  for (double wait : {0.0, 3.0, 60.0}) {
    CHECK(ufc_increment(req, make_ctx(400, wait, 1000.0), 1.0, no_delta) ==
          doctest::Approx(1700.0).epsilon(1e-12));
  }
}

TEST_CASE("future ufc increments never grow with wait time") {
  EquinoxParams params;
  const Request req = make_request(0, 100);
  double previous = 1e300;
  for (double wait = 0.0; wait <= 50.0; wait += 2.5) {
    const double inc = ufc_increment(req, make_ctx(400, wait, 250.0), 1.0, params);
    CHECK(inc <= previous);
    previous = inc;
  }
}

TEST_CASE("rfc increment matches hand-computed values") {
  CHECK(rfc_increment(make_ctx(1, 0, 0, 1000.0, 0.9).prediction, 1.0) ==
        doctest::Approx(900.0).epsilon(1e-12));
  CHECK(rfc_increment(make_ctx(1, 0, 0, 1000.0, 0.0).prediction, 1.0) == 0.0);
  const double one = rfc_increment(make_ctx(1, 0, 0, 750.0, 0.5).prediction, 1.0);
  const double two = rfc_increment(make_ctx(1, 0, 0, 750.0, 0.5).prediction, 2.0);
  CHECK(two == doctest::Approx(2.0 * one).epsilon(1e-12));
}

TEST_CASE("holistic score normalizes over backlogged clients") {
  EquinoxParams params;
  params.alpha = 0.7;
  const auto clients = two_clients(1000.0, 500.0, 100.0, 100.0);
  CHECK(holistic_score(clients[0], clients, params) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(holistic_score(clients[1], clients, params) ==
        doctest::Approx(0.65).epsilon(1e-9));

  const auto equal = two_clients(400.0, 400.0, 50.0, 50.0);
  CHECK(holistic_score(equal[0], equal, params) ==
        holistic_score(equal[1], equal, params));

  EquinoxParams ufc_only = params;
  ufc_only.alpha = 1.0;
  CHECK(holistic_score(clients[0], clients, ufc_only) >
        holistic_score(clients[1], clients, ufc_only));

  // Zero maxima yield zero terms rather than dividing by zero.
  const auto zeros = two_clients(0.0, 0.0, 0.0, 0.0);
  CHECK(holistic_score(zeros[0], zeros, params) == 0.0);
}

TEST_CASE("selection is invariant to scaling all counters") {
  EquinoxParams params;
  PolicySpec spec;
  spec.kind = PolicyKind::Equinox;
  spec.equinox = params;

  auto clients = two_clients(1200.0, 900.0, 40.0, 90.0);
  SchedulerPolicy policy(spec, clients);
  policy.set_backlogged(0, true);
  policy.set_backlogged(1, true);
  const std::vector<HeadCandidate> candidates = {{0, 0.0}, {1, 0.0}};
  const auto pick = policy.select_next(candidates);

  for (auto& c : clients) {
    c.ufc *= 37.5;
    c.rfc *= 37.5;
  }
  SchedulerPolicy scaled(spec, clients);
  scaled.set_backlogged(0, true);
  scaled.set_backlogged(1, true);
  CHECK(scaled.select_next(candidates) == pick);
}

TEST_CASE("selection tie-breaking follows arrival then client id") {
  PolicySpec fcfs;
  fcfs.kind = PolicyKind::Fcfs;
  SchedulerPolicy policy(fcfs, two_clients(0, 0, 0, 0));
  CHECK(policy.select_next({{0, 2.0}, {1, 1.0}}) == 1);
  CHECK(policy.select_next({{0, 2.0}, {1, 2.0}}) == 0);  // "c1" < "c2"
  CHECK(policy.select_next({}) == std::nullopt);
}

TEST_CASE("admission and completion keep the ledger reconciled") {
  PolicySpec spec;
  spec.kind = PolicyKind::Equinox;
  spec.equinox.delta = 0.0;
  SchedulerPolicy policy(spec, two_clients(0, 0, 0, 0));

  Request req = make_request(7, 100);
  const auto ctx = make_ctx(100, 0.0, 0.0, 500.0, 0.8);
  policy.on_admit(0, req, ctx);
  CHECK(policy.clients()[0].ufc == doctest::Approx(500.0));  // 100 + 4*100

  // Actual output doubled the prediction: correction adds w*4*100.
  RequestActuals actuals;
  actuals.output_tokens = 200;
  actuals.latency_s = 2.0;
  actuals.exec_s = 1.0;
  actuals.tps = 500.0;
  actuals.gpu_util = 0.8;
  policy.on_complete(0, req, actuals);
  CHECK(policy.clients()[0].ufc == doctest::Approx(900.0).epsilon(1e-12));
  CHECK(policy.clients()[0].accumulated_service ==
        doctest::Approx(900.0).epsilon(1e-12));

  // Completing an unknown request is an internal consistency error.
  Request ghost = make_request(99, 10);
  CHECK_THROWS_AS(policy.on_complete(0, ghost, actuals), EngineError);
}

TEST_CASE("corrections clamp counters at zero and count the event") {
  PolicySpec spec;
  spec.kind = PolicyKind::Equinox;
  spec.equinox.delta = 0.1;
  SchedulerPolicy policy(spec, two_clients(0, 0, 0, 0));

  Request req = make_request(1, 10);
  policy.on_admit(0, req, make_ctx(1000, 0.0, 0.0, 100.0, 0.5));
  RequestActuals actuals;
  actuals.output_tokens = 1;  // wild over-prediction
  actuals.latency_s = 1000.0;
  actuals.exec_s = 1.0;
  actuals.tps = 1.0;
  actuals.gpu_util = 0.1;
  policy.on_complete(0, req, actuals);
  CHECK(policy.clients()[0].ufc == 0.0);
  CHECK(policy.counter_clamps() > 0);
}

TEST_CASE("counter lift raises a returning client to the backlogged minimum") {
  PolicySpec spec;
  spec.kind = PolicyKind::Vtc;
  auto clients = two_clients(0, 0, 0, 0);
  clients[0].counter = 5000.0;
  clients[0].backlogged = true;
  clients[1].counter = 100.0;
  clients[1].backlogged = false;
  SchedulerPolicy policy(spec, clients);
  policy.on_activated(1);
  CHECK(policy.clients()[1].counter == doctest::Approx(5000.0));

  // A client already above the minimum keeps its own counter.
  auto clients2 = two_clients(0, 0, 0, 0);
  clients2[0].counter = 100.0;
  clients2[0].backlogged = true;
  clients2[1].counter = 900.0;
  SchedulerPolicy policy2(spec, clients2);
  policy2.on_activated(1);
  CHECK(policy2.clients()[1].counter == doctest::Approx(900.0));

  PolicySpec no_lift = spec;
  no_lift.counter_lift = false;
  SchedulerPolicy policy3(no_lift, clients);
  policy3.on_activated(1);
  CHECK(policy3.clients()[1].counter == doctest::Approx(100.0));
}

TEST_CASE("bare vtc counts input at admission and output per token") {
  PolicySpec spec;
  spec.kind = PolicyKind::Vtc;
  spec.vtc_use_prediction = false;
  SchedulerPolicy policy(spec, two_clients(0, 0, 0, 0));

  Request req = make_request(3, 50);
  policy.on_admit(0, req, make_ctx(10, 0.0, 0.0));
  CHECK(policy.clients()[0].counter == doctest::Approx(50.0));
  policy.on_tokens(0, 3);
  CHECK(policy.clients()[0].counter == doctest::Approx(50.0 + 12.0));

  PolicySpec predicted = spec;
  predicted.vtc_use_prediction = true;
  SchedulerPolicy policy2(predicted, two_clients(0, 0, 0, 0));
  policy2.on_admit(0, req, make_ctx(10, 0.0, 0.0));
  CHECK(policy2.clients()[0].counter == doctest::Approx(90.0));  // 50 + 4*10
  policy2.on_tokens(0, 3);
  CHECK(policy2.clients()[0].counter == doctest::Approx(90.0));
}

TEST_CASE("alpha outside [0,1] is rejected") {
  EquinoxParams params;
  params.alpha = 1.2;
  CHECK_THROWS_AS(params.validate(), ConfigError);
  params.alpha = 0.7;
  params.output_weight = 0.0;
  CHECK_THROWS_AS(params.validate(), ConfigError);
}
