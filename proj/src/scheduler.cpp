#include "equinox/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "equinox/errors.hpp"

namespace equinox {

void EquinoxParams::validate() const {
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("alpha must lie in [0, 1]");
  }
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  if (output_weight <= 0.0) throw ConfigError("output_weight must be > 0");
}

double ufc_increment(const Request& req, const ScheduleContext& ctx,
                     double weight, const EquinoxParams& params) {
  const double tokens =
      static_cast<double>(req.input_tokens) +
      params.output_weight *
          static_cast<double>(ctx.prediction.predicted_output_tokens);
  const double predict_s = ctx.prediction.predicted_latency_ms / 1000.0;
  return weight * tokens / (1.0 + params.delta * (ctx.wait_s + predict_s));
}

double rfc_increment(const PredictionRecord& prediction, double weight) {
  return weight * prediction.predicted_tps * prediction.predicted_gpu_util;
}

namespace {

struct Normalizers {
  double max_ufc = 0.0;
  double max_rfc = 0.0;
};

Normalizers backlogged_maxima(const std::vector<ClientState>& clients) {
  Normalizers n;
  for (const auto& c : clients) {
    if (!c.backlogged) continue;
    n.max_ufc = std::max(n.max_ufc, c.ufc);
    n.max_rfc = std::max(n.max_rfc, c.rfc);
  }
  return n;
}

double combine(double ufc, double rfc, const Normalizers& n,
               const EquinoxParams& params) {
  if (params.norm_mode == NormMode::None) {
    return params.alpha * ufc + params.beta() * rfc;
  }
  const double u = n.max_ufc > 0.0 ? ufc / n.max_ufc : 0.0;
  const double r = n.max_rfc > 0.0 ? rfc / n.max_rfc : 0.0;
  return params.alpha * u + params.beta() * r;
}

}  // namespace

double holistic_score(const ClientState& client,
                      const std::vector<ClientState>& all_clients,
                      const EquinoxParams& params) {
  return combine(client.ufc, client.rfc, backlogged_maxima(all_clients), params);
}

std::vector<double> metric_hf(const std::vector<ClientState>& clients,
                              const EquinoxParams& params) {
  Normalizers n;
  for (const auto& c : clients) {
    n.max_ufc = std::max(n.max_ufc, c.ufc);
    n.max_rfc = std::max(n.max_rfc, c.rfc);
  }
  std::vector<double> scores;
  scores.reserve(clients.size());
  for (const auto& c : clients) {
    scores.push_back(combine(c.ufc, c.rfc, n, params));
  }
  return scores;
}

std::optional<PolicyKind> parse_policy_kind(std::string_view name) {
  if (name == "fcfs") return PolicyKind::Fcfs;
  if (name == "vtc") return PolicyKind::Vtc;
  if (name == "equinox") return PolicyKind::Equinox;
  return std::nullopt;
}

std::string_view policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Fcfs:
      return "fcfs";
    case PolicyKind::Vtc:
      return "vtc";
    case PolicyKind::Equinox:
      return "equinox";
  }
  return "unknown";
}

std::string PolicySpec::label() const {
  std::string label(policy_kind_name(kind));
  if (kind == PolicyKind::Vtc && vtc_use_prediction) label += "+pred";
  return label;
}

SchedulerPolicy::SchedulerPolicy(PolicySpec spec,
                                 std::vector<ClientState> clients)
    : spec_(std::move(spec)), clients_(std::move(clients)) {
  spec_.equinox.validate();
  for (const auto& c : clients_) {
    if (c.weight <= 0.0) {
      throw ConfigError("client '" + c.client_id + "' has non-positive weight");
    }
  }
}

double SchedulerPolicy::selection_key(std::size_t client) const {
  switch (spec_.kind) {
    case PolicyKind::Fcfs:
      return 0.0;  // arrival order decides
    case PolicyKind::Vtc:
      return clients_[client].counter;
    case PolicyKind::Equinox:
      return holistic_score(clients_[client], clients_, spec_.equinox);
  }
  return 0.0;
}

std::optional<std::size_t> SchedulerPolicy::select_next(
    const std::vector<HeadCandidate>& candidates) const {
  if (candidates.empty()) return std::nullopt;
  const HeadCandidate* best = nullptr;
  double best_key = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    const double key = selection_key(cand.client_index);
    bool better = false;
    if (best == nullptr || key < best_key) {
      better = true;
    } else if (key == best_key) {
      if (cand.head_arrival_s < best->head_arrival_s) {
        better = true;
      } else if (cand.head_arrival_s == best->head_arrival_s &&
                 clients_[cand.client_index].client_id <
                     clients_[best->client_index].client_id) {
        better = true;
      }
    }
    if (better) {
      best = &cand;
      best_key = key;
    }
  }
  return best->client_index;
}

void SchedulerPolicy::on_admit(std::size_t client, const Request& req,
                               const ScheduleContext& ctx) {
  ClientState& c = clients_[client];
  PendingContribution pending;
  pending.client = client;
  pending.ctx = ctx;
  pending.ufc_inc = ufc_increment(req, ctx, c.weight, spec_.equinox);
  pending.rfc_inc = rfc_increment(ctx.prediction, c.weight);
  c.ufc += pending.ufc_inc;
  c.rfc += pending.rfc_inc;

  if (spec_.kind == PolicyKind::Vtc) {
    if (spec_.vtc_use_prediction) {
      pending.vtc_inc =
          c.weight * (static_cast<double>(req.input_tokens) +
                      spec_.equinox.output_weight *
                          static_cast<double>(
                              ctx.prediction.predicted_output_tokens));
    } else {
      // Input charged up front; output accrues as tokens are generated.
      pending.vtc_inc = c.weight * static_cast<double>(req.input_tokens);
    }
    c.counter += pending.vtc_inc;
  }
  pending_[req.id] = pending;
}

void SchedulerPolicy::on_tokens(std::size_t client, long long tokens) {
  if (spec_.kind != PolicyKind::Vtc || spec_.vtc_use_prediction) return;
  ClientState& c = clients_[client];
  c.counter +=
      c.weight * spec_.equinox.output_weight * static_cast<double>(tokens);
}

void SchedulerPolicy::on_complete(std::size_t client, const Request& req,
                                  const RequestActuals& actuals) {
  const auto it = pending_.find(req.id);
  if (it == pending_.end() || it->second.client != client) {
    throw EngineError("completion for unknown request id " +
                      std::to_string(req.id));
  }
  const PendingContribution pending = it->second;
  pending_.erase(it);

  ClientState& c = clients_[client];
  const double weighted_tokens =
      static_cast<double>(req.input_tokens) +
      spec_.equinox.output_weight * static_cast<double>(actuals.output_tokens);

  // The measured end-to-end latency stands in for (wait + predicted time).
  const double actual_ufc =
      c.weight * weighted_tokens /
      (1.0 + spec_.equinox.delta * actuals.latency_s);
  const double actual_rfc = c.weight * actuals.tps * actuals.gpu_util;

  c.ufc += actual_ufc - pending.ufc_inc;
  if (c.ufc < 0.0) {
    c.ufc = 0.0;
    ++counter_clamps_;
  }
  c.rfc += actual_rfc - pending.rfc_inc;
  if (c.rfc < 0.0) {
    c.rfc = 0.0;
    ++counter_clamps_;
  }

  if (spec_.kind == PolicyKind::Vtc && spec_.vtc_use_prediction) {
    c.counter += c.weight * weighted_tokens - pending.vtc_inc;
    if (c.counter < 0.0) {
      c.counter = 0.0;
      ++counter_clamps_;
    }
  }

  c.accumulated_service += c.weight * weighted_tokens;
}

void SchedulerPolicy::on_activated(std::size_t client) {
  if (!spec_.counter_lift) return;
  double min_ufc = std::numeric_limits<double>::infinity();
  double min_rfc = std::numeric_limits<double>::infinity();
  double min_counter = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    if (i == client || !clients_[i].backlogged) continue;
    any = true;
    min_ufc = std::min(min_ufc, clients_[i].ufc);
    min_rfc = std::min(min_rfc, clients_[i].rfc);
    min_counter = std::min(min_counter, clients_[i].counter);
  }
  if (!any) return;
  ClientState& c = clients_[client];
  c.ufc = std::max(c.ufc, min_ufc);
  c.rfc = std::max(c.rfc, min_rfc);
  c.counter = std::max(c.counter, min_counter);
}

void SchedulerPolicy::set_backlogged(std::size_t client, bool value) {
  clients_[client].backlogged = value;
}

}  // namespace equinox
