#pragma once

#include <string>
#include <vector>

#include "equinox/engine.hpp"
#include "equinox/rng.hpp"
#include "equinox/workload.hpp"

namespace equinox::testing {

struct ReqSpec {
  std::string client;
  double arrival;
  int in;
  int out;
  std::string tag = {};
};

inline Trace make_trace(const std::vector<ReqSpec>& specs,
                        const std::vector<std::string>& clients,
                        double duration) {
  Trace trace;
  trace.duration_s = duration;
  for (const auto& id : clients) {
    ClientSpec c;
    c.client_id = id;
    c.weight = 1.0;
    c.arrivals.kind = ArrivalKind::Replay;
    trace.clients.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Request r;
    r.id = static_cast<std::int64_t>(i);
    r.client_id = specs[i].client;
    r.arrival_time_s = specs[i].arrival;
    r.input_tokens = specs[i].in;
    r.true_output_tokens = specs[i].out;
    r.category_tag = specs[i].tag;
    trace.requests.push_back(std::move(r));
  }
  return trace;
}

/// Random 2-4 client trace with up to `max_requests` short requests, for
/// policy-equivalence checks.
inline Trace random_micro_trace(Rng& rng, int max_requests = 50) {
  const int n_clients = static_cast<int>(rng.uniform_int(2, 4));
  std::vector<std::string> clients;
  for (int c = 0; c < n_clients; ++c) {
    clients.push_back("c" + std::to_string(c));
  }
  const int n = static_cast<int>(rng.uniform_int(4, max_requests));
  std::vector<ReqSpec> specs;
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    t += rng.uniform01() * 0.05;
    ReqSpec spec;
    spec.client = clients[static_cast<std::size_t>(
        rng.uniform_int(0, n_clients - 1))];
    spec.arrival = t;
    spec.in = static_cast<int>(rng.uniform_int(1, 300));
    spec.out = static_cast<int>(rng.uniform_int(1, 40));
    specs.push_back(std::move(spec));
  }
  return make_trace(specs, clients, t + 1.0);
}

/// Admission order (request ids in admitted-event order).
inline std::vector<std::int64_t> admission_sequence(const EventLog& log) {
  std::vector<std::int64_t> ids;
  for (const auto& e : log.entries) {
    if (e.event == LogEvent::Admitted) ids.push_back(e.request_id);
  }
  return ids;
}

}  // namespace equinox::testing
