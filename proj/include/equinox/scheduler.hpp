#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "equinox/predictor.hpp"
#include "equinox/workload.hpp"

namespace equinox {

enum class NormMode { MaxOverClients, None };

/// Weights and knobs of the holistic-fairness policy. beta is always
/// 1 - alpha.
struct EquinoxParams {
  double alpha = 0.7;
  double delta = 0.1;          // latency compensation factor
  double output_weight = 4.0;  // output tokens count this much vs input
  NormMode norm_mode = NormMode::MaxOverClients;

  double beta() const { return 1.0 - alpha; }
  void validate() const;
};

struct ScheduleContext {
  double now_s = 0.0;
  double wait_s = 0.0;  // now - request arrival
  PredictionRecord prediction;
};

/// Per-tenant fairness ledger.
struct ClientState {
  std::string client_id;
  double weight = 1.0;
  double ufc = 0.0;
  double rfc = 0.0;
  double counter = 0.0;  // VTC token counter
  double accumulated_service = 0.0;  // weighted tokens delivered (metrics)
  bool backlogged = false;
};

/// Weighted-token service credit discounted by experienced latency:
/// w * (in + output_weight * predicted_out) / (1 + delta * (wait + predict)).
/// Predicted time is the mapped latency converted to seconds.
double ufc_increment(const Request& req, const ScheduleContext& ctx,
                     double weight, const EquinoxParams& params);

/// Resource credit: w * predicted_tps * predicted_gpu_util.
double rfc_increment(const PredictionRecord& prediction, double weight);

/// alpha * normalized UFC + beta * normalized RFC. Under MaxOverClients the
/// normalizer is the max over currently backlogged clients; a zero max
/// yields a zero term. Under None the raw counters are combined.
double holistic_score(const ClientState& client,
                      const std::vector<ClientState>& all_clients,
                      const EquinoxParams& params);

/// Reporting variant: scores every client with normalization over the whole
/// roster, regardless of backlog state.
std::vector<double> metric_hf(const std::vector<ClientState>& clients,
                              const EquinoxParams& params);

enum class PolicyKind { Fcfs, Vtc, Equinox };

std::optional<PolicyKind> parse_policy_kind(std::string_view name);
std::string_view policy_kind_name(PolicyKind kind);

struct PolicySpec {
  PolicyKind kind = PolicyKind::Equinox;
  EquinoxParams equinox;
  /// VTC only: credit w*(in + output_weight*predicted_out) at admission and
  /// reconcile at completion, instead of counting output per generated token.
  bool vtc_use_prediction = false;
  /// Lift a newly backlogged client's counters to the backlogged minimum.
  bool counter_lift = true;

  std::string label() const;
};

/// Head request of a backlogged client, as seen by selection.
struct HeadCandidate {
  std::size_t client_index = 0;
  double head_arrival_s = 0.0;
};

struct RequestActuals {
  int output_tokens = 0;
  double latency_s = 0.0;  // completed - arrived
  double exec_s = 0.0;     // completed - admitted
  double gpu_util = 0.0;   // engine utilization over the residency window
  double tps = 0.0;        // (in + out) / exec_s
};

/// Scheduling state machine: FCFS, VTC, or the dual-counter policy.
/// The UFC/RFC ledger is maintained under every policy so fairness metrics
/// stay comparable across runs; only selection keys differ. Mutated solely
/// by the engine's event loop.
class SchedulerPolicy {
 public:
  SchedulerPolicy(PolicySpec spec, std::vector<ClientState> clients);

  /// Client whose head request should be admitted next; ties break by
  /// earlier head arrival, then lexicographic client id.
  std::optional<std::size_t> select_next(
      const std::vector<HeadCandidate>& candidates) const;

  void on_admit(std::size_t client, const Request& req,
                const ScheduleContext& ctx);
  /// Output tokens generated this iteration (bare-VTC incremental credit).
  void on_tokens(std::size_t client, long long tokens);
  /// Replaces the request's predicted counter contribution with the same
  /// formulas evaluated at actuals; counters clamp at zero.
  void on_complete(std::size_t client, const Request& req,
                   const RequestActuals& actuals);
  /// Idle -> backlogged transition: apply the counter lift.
  void on_activated(std::size_t client);
  void set_backlogged(std::size_t client, bool value);

  const std::vector<ClientState>& clients() const { return clients_; }
  const PolicySpec& spec() const { return spec_; }
  std::int64_t counter_clamps() const { return counter_clamps_; }

 private:
  double selection_key(std::size_t client) const;

  PolicySpec spec_;
  std::vector<ClientState> clients_;
  struct PendingContribution {
    std::size_t client = 0;
    double ufc_inc = 0.0;
    double rfc_inc = 0.0;
    double vtc_inc = 0.0;
    ScheduleContext ctx;
  };
  std::map<std::int64_t, PendingContribution> pending_;  // by request id
  std::int64_t counter_clamps_ = 0;
};

}  // namespace equinox
