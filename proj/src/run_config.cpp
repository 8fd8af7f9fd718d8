#include "equinox/run_config.hpp"

#include <fstream>
#include <set>

#include "equinox/errors.hpp"

namespace equinox {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (known.find(key) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

double get_number(const json& obj, const char* key, double fallback,
                  const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) {
    throw ConfigError("'" + where + "." + key + "' must be a number");
  }
  return obj.at(key).get<double>();
}

bool get_bool(const json& obj, const char* key, bool fallback,
              const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) {
    throw ConfigError("'" + where + "." + key + "' must be a boolean");
  }
  return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const char* key,
                       const std::string& fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) {
    throw ConfigError("'" + where + "." + key + "' must be a string");
  }
  return obj.at(key).get<std::string>();
}

ScenarioConfig parse_scenario(const json& obj) {
  reject_unknown_keys(obj, {"preset", "trace", "duration_s", "tag_noise", "weights"},
                      "scenario");
  ScenarioConfig sc;
  sc.preset = get_string(obj, "preset", "", "scenario");
  sc.trace_path = get_string(obj, "trace", "", "scenario");
  if (sc.preset.empty() == sc.trace_path.empty()) {
    throw ConfigError("scenario needs exactly one of 'preset' or 'trace'");
  }
  if (!sc.preset.empty() && !parse_preset(sc.preset)) {
    throw ConfigError("unknown scenario preset '" + sc.preset + "'");
  }
  sc.duration_s = get_number(obj, "duration_s", 60.0, "scenario");
  if (sc.duration_s <= 0.0) throw ConfigError("'scenario.duration_s' must be > 0");
  sc.tag_noise = get_number(obj, "tag_noise", 0.2, "scenario");
  if (sc.tag_noise < 0.0 || sc.tag_noise > 1.0) {
    throw ConfigError("'scenario.tag_noise' must lie in [0, 1]");
  }
  if (obj.contains("weights")) {
    if (!obj.at("weights").is_object()) {
      throw ConfigError("'scenario.weights' must be an object");
    }
    for (const auto& [client, w] : obj.at("weights").items()) {
      if (!w.is_number() || w.get<double>() <= 0.0) {
        throw ConfigError("weight for client '" + client + "' must be > 0");
      }
      sc.weights[client] = w.get<double>();
    }
  }
  return sc;
}

PolicySpec parse_policy(const json& obj, const std::string& where) {
  reject_unknown_keys(obj,
                      {"kind", "alpha", "delta", "output_weight", "norm_mode",
                       "counter_lift", "use_prediction"},
                      where);
  PolicySpec spec;
  const std::string kind = get_string(obj, "kind", "equinox", where);
  const auto parsed = parse_policy_kind(kind);
  if (!parsed) {
    throw ConfigError("'" + where + ".kind' must be fcfs|vtc|equinox, got '" +
                      kind + "'");
  }
  spec.kind = *parsed;
  spec.equinox.alpha = get_number(obj, "alpha", 0.7, where);
  if (spec.equinox.alpha < 0.0 || spec.equinox.alpha > 1.0) {
    throw ConfigError("'" + where + ".alpha' must lie in [0, 1]");
  }
  spec.equinox.delta = get_number(obj, "delta", 0.1, where);
  if (spec.equinox.delta < 0.0) {
    throw ConfigError("'" + where + ".delta' must be >= 0");
  }
  spec.equinox.output_weight = get_number(obj, "output_weight", 4.0, where);
  if (spec.equinox.output_weight <= 0.0) {
    throw ConfigError("'" + where + ".output_weight' must be > 0");
  }
  const std::string norm =
      get_string(obj, "norm_mode", "max_over_clients", where);
  if (norm == "max_over_clients") {
    spec.equinox.norm_mode = NormMode::MaxOverClients;
  } else if (norm == "none") {
    spec.equinox.norm_mode = NormMode::None;
  } else {
    throw ConfigError("'" + where + ".norm_mode' must be max_over_clients|none");
  }
  spec.counter_lift = get_bool(obj, "counter_lift", true, where);
  spec.vtc_use_prediction = get_bool(obj, "use_prediction", false, where);
  return spec;
}

PredictorConfig parse_predictor(const json& obj, const std::string& where) {
  reject_unknown_keys(
      obj, {"kind", "target_l1", "experts", "corpus", "corpus_size", "corpus_seed"},
      where);
  PredictorConfig pc;
  pc.kind = get_string(obj, "kind", "oracle", where);
  static const std::set<std::string> kinds = {"oracle", "noisy_oracle",
                                              "single_proxy", "mope"};
  if (kinds.find(pc.kind) == kinds.end()) {
    throw ConfigError("'" + where +
                      ".kind' must be oracle|noisy_oracle|single_proxy|mope");
  }
  pc.target_l1 = get_number(obj, "target_l1", 33.0, where);
  if (pc.target_l1 < 0.0) {
    throw ConfigError("'" + where + ".target_l1' must be >= 0");
  }
  pc.experts = static_cast<int>(get_number(obj, "experts", 3, where));
  if (pc.experts < 1 || pc.experts > 16) {
    throw ConfigError("'" + where + ".experts' must lie in [1, 16]");
  }
  pc.corpus = get_string(obj, "corpus", "builtin", where);
  pc.corpus_size =
      static_cast<int>(get_number(obj, "corpus_size", 10000, where));
  if (pc.corpus_size < 1) {
    throw ConfigError("'" + where + ".corpus_size' must be >= 1");
  }
  pc.corpus_seed = static_cast<std::uint64_t>(
      get_number(obj, "corpus_seed", 7, where));
  return pc;
}

PerfParams parse_perf(const json& obj) {
  reject_unknown_keys(obj,
                      {"prefill_linear", "prefill_quad", "decode_base",
                       "decode_per_ctx_token", "refresh_overhead",
                       "mem_per_token_bytes", "mem_capacity_bytes", "max_batch"},
                      "perf");
  PerfParams p;
  p.prefill_linear_ms = get_number(obj, "prefill_linear", p.prefill_linear_ms, "perf");
  p.prefill_quad_ms = get_number(obj, "prefill_quad", p.prefill_quad_ms, "perf");
  p.decode_base_ms = get_number(obj, "decode_base", p.decode_base_ms, "perf");
  p.decode_per_ctx_ms =
      get_number(obj, "decode_per_ctx_token", p.decode_per_ctx_ms, "perf");
  p.refresh_ms = get_number(obj, "refresh_overhead", p.refresh_ms, "perf");
  p.mem_per_token_bytes =
      get_number(obj, "mem_per_token_bytes", p.mem_per_token_bytes, "perf");
  p.mem_capacity_bytes =
      get_number(obj, "mem_capacity_bytes", p.mem_capacity_bytes, "perf");
  p.max_batch = static_cast<int>(
      get_number(obj, "max_batch", static_cast<double>(p.max_batch), "perf"));
  p.validate();
  return p;
}

}  // namespace

std::string PredictorConfig::label() const {
  if (kind == "noisy_oracle") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "noisy_oracle(l1=%g)", target_l1);
    return buf;
  }
  if (kind == "mope") return "mope(" + std::to_string(experts) + ")";
  return kind;
}

std::vector<double> PredictorConfig::bucket_percentiles() const {
  std::vector<double> percentiles;
  for (int i = 1; i < experts; ++i) {
    percentiles.push_back(100.0 * static_cast<double>(i) /
                          static_cast<double>(experts));
  }
  return percentiles;
}

EngineConfig RunConfig::engine_config(const PolicySpec& policy_spec) const {
  EngineConfig cfg;
  cfg.perf = perf;
  cfg.policy = policy_spec;
  cfg.report_window_s = report_window_s;
  cfg.max_sim_time_s = max_sim_time_s;
  cfg.ema_alpha = ema_alpha;
  cfg.backfill = backfill;
  return cfg;
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(doc,
                      {"scenario", "policy", "predictor", "perf", "engine",
                       "profile", "seeds", "out_dir", "grid", "alphas"},
                      "config");
  RunConfig cfg;
  if (!doc.contains("scenario")) throw ConfigError("config needs a 'scenario'");
  cfg.scenario = parse_scenario(doc.at("scenario"));
  if (doc.contains("policy")) cfg.policy = parse_policy(doc.at("policy"), "policy");
  if (doc.contains("predictor")) {
    cfg.predictor = parse_predictor(doc.at("predictor"), "predictor");
  }
  if (doc.contains("perf")) cfg.perf = parse_perf(doc.at("perf"));

  if (doc.contains("engine")) {
    const auto& eng = doc.at("engine");
    reject_unknown_keys(eng,
                        {"report_window_s", "max_sim_time_s", "ema_alpha",
                         "backfill", "prediction_overhead_ms"},
                        "engine");
    cfg.report_window_s = get_number(eng, "report_window_s", 1.0, "engine");
    if (cfg.report_window_s <= 0.0) {
      throw ConfigError("'engine.report_window_s' must be > 0");
    }
    cfg.max_sim_time_s = get_number(eng, "max_sim_time_s", 0.0, "engine");
    if (cfg.max_sim_time_s < 0.0) {
      throw ConfigError("'engine.max_sim_time_s' must be >= 0");
    }
    cfg.ema_alpha = get_number(eng, "ema_alpha", 0.2, "engine");
    if (cfg.ema_alpha <= 0.0 || cfg.ema_alpha > 1.0) {
      throw ConfigError("'engine.ema_alpha' must lie in (0, 1]");
    }
    cfg.backfill = get_bool(eng, "backfill", false, "engine");
    cfg.prediction_overhead_ms =
        get_number(eng, "prediction_overhead_ms", 0.0, "engine");
    if (cfg.prediction_overhead_ms < 0.0) {
      throw ConfigError("'engine.prediction_overhead_ms' must be >= 0");
    }
  }

  if (doc.contains("profile")) {
    const auto& prof = doc.at("profile");
    reject_unknown_keys(prof, {"bucket_bounds", "reference_input_tokens"},
                        "profile");
    if (prof.contains("bucket_bounds")) {
      if (!prof.at("bucket_bounds").is_array()) {
        throw ConfigError("'profile.bucket_bounds' must be an array");
      }
      cfg.profile_bucket_bounds =
          prof.at("bucket_bounds").get<std::vector<int>>();
    }
    cfg.profile_reference_input = static_cast<int>(
        get_number(prof, "reference_input_tokens", 1.0, "profile"));
    if (cfg.profile_reference_input < 1) {
      throw ConfigError("'profile.reference_input_tokens' must be >= 1");
    }
  }

  if (doc.contains("seeds")) {
    if (!doc.at("seeds").is_array() || doc.at("seeds").empty()) {
      throw ConfigError("'seeds' must be a non-empty array");
    }
    cfg.seeds.clear();
    for (const auto& s : doc.at("seeds")) {
      if (!s.is_number_integer() && !s.is_number_unsigned()) {
        throw ConfigError("'seeds' entries must be integers");
      }
      cfg.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  cfg.out_dir = get_string(doc, "out_dir", "out", "config");

  if (doc.contains("grid")) {
    if (!doc.at("grid").is_array()) throw ConfigError("'grid' must be an array");
    for (std::size_t i = 0; i < doc.at("grid").size(); ++i) {
      const auto& cell = doc.at("grid")[i];
      const std::string where = "grid[" + std::to_string(i) + "]";
      reject_unknown_keys(cell, {"name", "policy", "predictor"}, where);
      GridCell gc;
      gc.name = get_string(cell, "name", "cell" + std::to_string(i), where);
      gc.policy = cell.contains("policy")
                      ? parse_policy(cell.at("policy"), where + ".policy")
                      : cfg.policy;
      gc.predictor =
          cell.contains("predictor")
              ? parse_predictor(cell.at("predictor"), where + ".predictor")
              : cfg.predictor;
      cfg.grid.push_back(std::move(gc));
    }
  }

  if (doc.contains("alphas")) {
    if (!doc.at("alphas").is_array() || doc.at("alphas").empty()) {
      throw ConfigError("'alphas' must be a non-empty array");
    }
    for (const auto& a : doc.at("alphas")) {
      if (!a.is_number()) throw ConfigError("'alphas' entries must be numbers");
      const double alpha = a.get<double>();
      if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("'alphas' entries must lie in [0, 1] (got alpha=" +
                          std::to_string(alpha) + ")");
      }
      cfg.alphas.push_back(alpha);
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

namespace {

nlohmann::json policy_json(const PolicySpec& spec) {
  return {
      {"kind", std::string(policy_kind_name(spec.kind))},
      {"alpha", spec.equinox.alpha},
      {"delta", spec.equinox.delta},
      {"output_weight", spec.equinox.output_weight},
      {"norm_mode", spec.equinox.norm_mode == NormMode::MaxOverClients
                        ? "max_over_clients"
                        : "none"},
      {"counter_lift", spec.counter_lift},
      {"use_prediction", spec.vtc_use_prediction},
  };
}

nlohmann::json predictor_json(const PredictorConfig& pc) {
  return {
      {"kind", pc.kind},         {"target_l1", pc.target_l1},
      {"experts", pc.experts},   {"corpus", pc.corpus},
      {"corpus_size", pc.corpus_size},
      {"corpus_seed", pc.corpus_seed},
  };
}

}  // namespace

nlohmann::json RunConfig::resolved() const {
  nlohmann::json j;
  j["scenario"] = {
      {"duration_s", scenario.duration_s},
      {"tag_noise", scenario.tag_noise},
  };
  if (!scenario.preset.empty()) j["scenario"]["preset"] = scenario.preset;
  if (!scenario.trace_path.empty()) j["scenario"]["trace"] = scenario.trace_path;
  if (!scenario.weights.empty()) j["scenario"]["weights"] = scenario.weights;
  j["policy"] = policy_json(policy);
  j["predictor"] = predictor_json(predictor);
  j["perf"] = {
      {"prefill_linear", perf.prefill_linear_ms},
      {"prefill_quad", perf.prefill_quad_ms},
      {"decode_base", perf.decode_base_ms},
      {"decode_per_ctx_token", perf.decode_per_ctx_ms},
      {"refresh_overhead", perf.refresh_ms},
      {"mem_per_token_bytes", perf.mem_per_token_bytes},
      {"mem_capacity_bytes", perf.mem_capacity_bytes},
      {"max_batch", perf.max_batch},
  };
  j["engine"] = {
      {"report_window_s", report_window_s},
      {"max_sim_time_s", max_sim_time_s},
      {"ema_alpha", ema_alpha},
      {"backfill", backfill},
      {"prediction_overhead_ms", prediction_overhead_ms},
  };
  j["profile"] = {
      {"bucket_bounds", profile_bucket_bounds},
      {"reference_input_tokens", profile_reference_input},
  };
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  if (!grid.empty()) {
    j["grid"] = nlohmann::json::array();
    for (const auto& cell : grid) {
      j["grid"].push_back({{"name", cell.name},
                           {"policy", policy_json(cell.policy)},
                           {"predictor", predictor_json(cell.predictor)}});
    }
  }
  if (!alphas.empty()) j["alphas"] = alphas;
  return j;
}

}  // namespace equinox
