#include "equinox/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "equinox/errors.hpp"

namespace fs = std::filesystem;

namespace equinox {

ExperimentRunner::ExperimentRunner(RunConfig cfg) : cfg_(std::move(cfg)) {
  profile_ = build_profile(cfg_.perf, cfg_.profile_bucket_bounds,
                           cfg_.profile_reference_input);
}

const Trace& ExperimentRunner::trace_for_seed(std::uint64_t seed) {
  auto it = traces_.find(seed);
  if (it != traces_.end()) return it->second;

  Trace trace;
  if (!cfg_.scenario.preset.empty()) {
    ScenarioOptions opts;
    opts.tag_noise = cfg_.scenario.tag_noise;
    trace = generate_scenario(cfg_.scenario.preset, seed,
                              cfg_.scenario.duration_s, opts);
  } else {
    trace = load_trace(cfg_.scenario.trace_path);
  }
  for (const auto& [client, weight] : cfg_.scenario.weights) {
    bool found = false;
    for (auto& spec : trace.clients) {
      if (spec.client_id == client) {
        spec.weight = weight;
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("weight override for unknown client '" + client + "'");
    }
  }
  return traces_.emplace(seed, std::move(trace)).first->second;
}

std::string ExperimentRunner::model_key(const PredictorConfig& pc) const {
  std::ostringstream key;
  key << pc.kind << '|' << pc.experts << '|' << pc.corpus << '|'
      << pc.corpus_size << '|' << pc.corpus_seed;
  return key.str();
}

void ExperimentRunner::ensure_models(const PredictorConfig& pc) {
  const std::string key = model_key(pc);
  if (pc.kind == "mope") {
    if (mope_models_.count(key) != 0) return;
    const Trace corpus = pc.corpus == "builtin"
                             ? make_prediction_corpus(pc.corpus_size, pc.corpus_seed)
                             : load_trace(pc.corpus);
    mope_models_.emplace(key, train_mope(corpus, pc.bucket_percentiles()));
  } else if (pc.kind == "single_proxy") {
    if (proxy_tables_.count(key) != 0) return;
    const Trace corpus = pc.corpus == "builtin"
                             ? make_prediction_corpus(pc.corpus_size, pc.corpus_seed)
                             : load_trace(pc.corpus);
    proxy_tables_.emplace(key, train_single_proxy(corpus));
  }
}

void ExperimentRunner::prepare(const std::vector<GridCell>& cells) {
  for (std::uint64_t seed : cfg_.seeds) trace_for_seed(seed);
  ensure_models(cfg_.predictor);
  for (const auto& cell : cells) ensure_models(cell.predictor);
}

std::unique_ptr<Predictor> ExperimentRunner::make_predictor(
    const PredictorConfig& pc, std::uint64_t seed) const {
  if (pc.kind == "oracle") return std::make_unique<OraclePredictor>();
  if (pc.kind == "noisy_oracle") {
    return std::make_unique<NoisyOraclePredictor>(pc.target_l1, seed);
  }
  if (pc.kind == "mope") {
    return std::make_unique<MopePredictor>(mope_models_.at(model_key(pc)));
  }
  if (pc.kind == "single_proxy") {
    return std::make_unique<SingleProxyPredictor>(proxy_tables_.at(model_key(pc)));
  }
  throw ConfigError("unknown predictor kind '" + pc.kind + "'");
}

std::string ExperimentRunner::predictor_model_json(const PredictorConfig& pc) const {
  if (pc.kind == "mope") {
    const auto it = mope_models_.find(model_key(pc));
    if (it != mope_models_.end()) return it->second.to_json().dump(2);
  }
  if (pc.kind == "single_proxy") {
    const auto it = proxy_tables_.find(model_key(pc));
    if (it != proxy_tables_.end()) {
      nlohmann::json j = {{"bin_upper", it->second.bin_upper},
                          {"bin_value", it->second.bin_value},
                          {"out_min", it->second.out_min},
                          {"out_max", it->second.out_max}};
      return j.dump(2);
    }
  }
  return {};
}

SeedRun ExperimentRunner::execute(const PolicySpec& policy,
                                  const PredictorConfig& predictor,
                                  std::uint64_t seed) {
  const Trace& trace = trace_for_seed(seed);
  const auto pred = make_predictor(predictor, seed);

  EngineConfig engine_cfg = cfg_.engine_config(policy);
  engine_cfg.prediction_overhead_ms = cfg_.prediction_overhead_ms;

  SeedRun run;
  run.seed = seed;
  run.trace_hash = trace_hash(trace);
  run.result = run_simulation(trace, engine_cfg, *pred, profile_);
  // The service-difference metric always uses the base config's output
  // weight so grid cells with different policy weights stay comparable.
  run.report = build_report(trace, run.result, cfg_.policy.equinox.output_weight,
                            cfg_.report_window_s);
  return run;
}

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  const auto count = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(jobs), n));
  threads.reserve(count);
  for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);
}

namespace {

nlohmann::json summary_json(const SimReport& report) {
  return report.to_json().at("summary");
}

nlohmann::json mean_summaries(const std::vector<const SimReport*>& reports) {
  static constexpr const char* kKeys[] = {
      "max_diff",       "avg_diff",       "var_diff",
      "jain_hf",        "jain_ttft_p90",  "throughput_tps",
      "mean_gpu_util"};
  nlohmann::json means;
  for (const char* key : kKeys) {
    double total = 0.0;
    for (const SimReport* r : reports) {
      total += summary_json(*r).at(key).get<double>();
    }
    means[key] = reports.empty() ? 0.0 : total / static_cast<double>(reports.size());
  }
  return means;
}

nlohmann::json report_file_json(const ExperimentRunner& runner,
                                const SeedRun& run, const std::string& policy_label,
                                const std::string& predictor_label) {
  nlohmann::json j = run.report.to_json();
  j["policy"] = policy_label;
  j["predictor"] = predictor_label;
  j["seed"] = run.seed;
  j["trace_hash"] = run.trace_hash;
  j["config"] = runner.config().resolved();
  return j;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EngineError("cannot write '" + path.string() + "'");
  out << content;
}

void write_seed_dir(const ExperimentRunner& runner, const SeedRun& run,
                    const fs::path& dir, const std::string& policy_label,
                    const std::string& predictor_label, bool write_event_log) {
  fs::create_directories(dir);
  write_text(dir / "report.json",
             report_file_json(runner, run, policy_label, predictor_label).dump(2) +
                 "\n");

  char buf[256];
  {
    std::ostringstream csv;
    csv << "time_s,client_id,ufc,rfc,hf,service_cum\n";
    for (const auto& s : run.result.counter_series) {
      std::snprintf(buf, sizeof(buf), "%.6f,%s,%.6f,%.6f,%.6f,%.6f\n", s.time_s,
                    run.result.final_clients[s.client_index].client_id.c_str(),
                    s.ufc, s.rfc, s.hf, s.service_cum);
      csv << buf;
    }
    write_text(dir / "counters.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "time_s,gpu_util,busy_ms,overhead_ms\n";
    for (const auto& s : run.result.gpu_series) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f\n", s.time_s,
                    s.gpu_util, s.busy_ms, s.overhead_ms);
      csv << buf;
    }
    write_text(dir / "gpu.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "time_s,client_id,service_rate\n";
    for (const auto& [client, rep] : run.report.per_client) {
      for (const auto& p : rep.service_rate_series) {
        std::snprintf(buf, sizeof(buf), "%.6f,%s,%.6f\n", p.time_s,
                      client.c_str(), p.value);
        csv << buf;
      }
    }
    write_text(dir / "service_rate.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "time_s,max_abs_diff\n";
    for (const auto& p : run.report.diff_series) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", p.time_s, p.value);
      csv << buf;
    }
    write_text(dir / "service_diff.csv", csv.str());
  }
  if (write_event_log) {
    write_text(dir / "events.ndjson", run.result.log.to_ndjson());
  }
}

}  // namespace

RunBatchResult run_batch(ExperimentRunner& runner, int jobs) {
  runner.prepare({});
  const auto& seeds = runner.config().seeds;
  RunBatchResult batch;
  batch.runs.resize(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    batch.runs[i] = runner.execute(runner.config().policy,
                                   runner.config().predictor, seeds[i]);
  });

  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<const SimReport*> reports;
  for (const auto& run : batch.runs) {
    reports.push_back(&run.report);
    nlohmann::json entry = summary_json(run.report);
    entry["seed"] = run.seed;
    entry["trace_hash"] = run.trace_hash;
    per_seed.push_back(std::move(entry));
  }
  batch.aggregate = {
      {"policy", runner.config().policy.label()},
      {"predictor", runner.config().predictor.label()},
      {"config", runner.config().resolved()},
      {"per_seed", std::move(per_seed)},
      {"means", mean_summaries(reports)},
  };
  return batch;
}

AblationResult run_ablation(ExperimentRunner& runner, int jobs) {
  const auto& cfg = runner.config();
  if (cfg.grid.empty()) {
    throw ConfigError("ablation needs a non-empty 'grid' in the config");
  }
  runner.prepare(cfg.grid);

  AblationResult ablation;
  ablation.cells.resize(cfg.grid.size());
  for (std::size_t c = 0; c < cfg.grid.size(); ++c) {
    ablation.cells[c].cell = cfg.grid[c];
    ablation.cells[c].runs.resize(cfg.seeds.size());
  }
  const std::size_t total = cfg.grid.size() * cfg.seeds.size();
  parallel_for(total, jobs, [&](std::size_t i) {
    const std::size_t c = i / cfg.seeds.size();
    const std::size_t s = i % cfg.seeds.size();
    ablation.cells[c].runs[s] =
        runner.execute(cfg.grid[c].policy, cfg.grid[c].predictor, cfg.seeds[s]);
  });

  ablation.table = nlohmann::json::array();
  for (auto& cell : ablation.cells) {
    std::vector<const SimReport*> reports;
    std::vector<std::string> hashes;
    for (const auto& run : cell.runs) {
      reports.push_back(&run.report);
      hashes.push_back(run.trace_hash);
    }
    cell.means = mean_summaries(reports);
    nlohmann::json row = cell.means;
    row["name"] = cell.cell.name;
    row["policy"] = cell.cell.policy.label();
    row["predictor"] = cell.cell.predictor.label();
    row["trace_hashes"] = hashes;
    ablation.table.push_back(std::move(row));
  }
  return ablation;
}

SweepResult run_sweep_alpha(ExperimentRunner& runner, int jobs) {
  const auto& cfg = runner.config();
  if (cfg.alphas.empty()) {
    throw ConfigError("alpha sweep needs a non-empty 'alphas' in the config");
  }
  runner.prepare({});

  SweepResult sweep;
  sweep.points.resize(cfg.alphas.size());
  std::vector<std::vector<SeedRun>> runs(cfg.alphas.size());
  for (auto& r : runs) r.resize(cfg.seeds.size());

  const std::size_t total = cfg.alphas.size() * cfg.seeds.size();
  parallel_for(total, jobs, [&](std::size_t i) {
    const std::size_t a = i / cfg.seeds.size();
    const std::size_t s = i % cfg.seeds.size();
    PolicySpec policy = cfg.policy;
    policy.kind = PolicyKind::Equinox;
    policy.equinox.alpha = cfg.alphas[a];
    runs[a][s] = runner.execute(policy, cfg.predictor, cfg.seeds[s]);
  });

  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    SweepPoint& point = sweep.points[a];
    point.alpha = cfg.alphas[a];
    for (const auto& run : runs[a]) {
      point.jain_ttft_p90 += run.report.jain_ttft_p90;
      point.throughput_tps += run.report.throughput_tps;
    }
    point.jain_ttft_p90 /= static_cast<double>(cfg.seeds.size());
    point.throughput_tps /= static_cast<double>(cfg.seeds.size());
  }
  double max_jain = 0.0, max_tps = 0.0;
  for (const auto& p : sweep.points) {
    max_jain = std::max(max_jain, p.jain_ttft_p90);
    max_tps = std::max(max_tps, p.throughput_tps);
  }
  for (auto& p : sweep.points) {
    p.jain_norm = max_jain > 0.0 ? p.jain_ttft_p90 / max_jain : 0.0;
    p.throughput_norm = max_tps > 0.0 ? p.throughput_tps / max_tps : 0.0;
  }
  return sweep;
}

void write_run_outputs(const ExperimentRunner& runner, const RunBatchResult& batch,
                       bool write_event_log) {
  const fs::path out_dir = runner.config().out_dir;
  fs::create_directories(out_dir);
  for (const auto& run : batch.runs) {
    write_seed_dir(runner, run, out_dir / ("seed_" + std::to_string(run.seed)),
                   runner.config().policy.label(),
                   runner.config().predictor.label(), write_event_log);
  }
  write_text(out_dir / "aggregate.json", batch.aggregate.dump(2) + "\n");
  const std::string model = runner.predictor_model_json(runner.config().predictor);
  if (!model.empty()) write_text(out_dir / "predictor_model.json", model + "\n");
}

void write_ablation_outputs(const ExperimentRunner& runner,
                            const AblationResult& ablation) {
  const fs::path out_dir = runner.config().out_dir;
  fs::create_directories(out_dir);

  for (const auto& cell : ablation.cells) {
    for (const auto& run : cell.runs) {
      const fs::path dir =
          out_dir / cell.cell.name / ("seed_" + std::to_string(run.seed));
      fs::create_directories(dir);
      write_text(dir / "report.json",
                 report_file_json(runner, run, cell.cell.policy.label(),
                                  cell.cell.predictor.label())
                         .dump(2) +
                     "\n");
    }
  }

  std::ostringstream csv;
  csv << "name,policy,predictor,max_diff,avg_diff,var_diff,jain_hf,"
         "jain_ttft_p90,throughput_tps,mean_gpu_util,trace_hashes\n";
  char buf[512];
  for (const auto& row : ablation.table) {
    std::string hashes;
    for (const auto& h : row.at("trace_hashes")) {
      if (!hashes.empty()) hashes += ';';
      hashes += h.get<std::string>();
    }
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%s,%.4f,%.4f,%.4f,%.6f,%.6f,%.2f,%.4f,%s\n",
                  row.at("name").get<std::string>().c_str(),
                  row.at("policy").get<std::string>().c_str(),
                  row.at("predictor").get<std::string>().c_str(),
                  row.at("max_diff").get<double>(),
                  row.at("avg_diff").get<double>(),
                  row.at("var_diff").get<double>(),
                  row.at("jain_hf").get<double>(),
                  row.at("jain_ttft_p90").get<double>(),
                  row.at("throughput_tps").get<double>(),
                  row.at("mean_gpu_util").get<double>(), hashes.c_str());
    csv << buf;
  }
  write_text(out_dir / "ablation.csv", csv.str());

  nlohmann::json doc = {
      {"config", runner.config().resolved()},
      {"table", ablation.table},
  };
  write_text(out_dir / "ablation.json", doc.dump(2) + "\n");
}

void write_sweep_outputs(const ExperimentRunner& runner, const SweepResult& sweep) {
  const fs::path out_dir = runner.config().out_dir;
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "alpha,jain_ttft_p90_norm,throughput_norm\n";
  char buf[128];
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep.points) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.6f,%.6f\n", p.alpha, p.jain_norm,
                  p.throughput_norm);
    csv << buf;
    points.push_back({{"alpha", p.alpha},
                      {"jain_ttft_p90", p.jain_ttft_p90},
                      {"throughput_tps", p.throughput_tps},
                      {"jain_ttft_p90_norm", p.jain_norm},
                      {"throughput_norm", p.throughput_norm}});
  }
  write_text(out_dir / "sweep_alpha.csv", csv.str());
  nlohmann::json doc = {{"config", runner.config().resolved()},
                        {"points", points}};
  write_text(out_dir / "sweep_alpha.json", doc.dump(2) + "\n");
}

void write_calibration_outputs(const RunConfig& cfg, std::ostream& echo) {
  const GpuProfile profile = build_profile(cfg.perf, cfg.profile_bucket_bounds,
                                           cfg.profile_reference_input);
  std::ostringstream csv;
  write_profile_csv(profile, csv);
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / "profile.csv", csv.str());
  echo << csv.str();
}

int print_summary_table(const std::string& dir, std::ostream& out) {
  std::vector<fs::path> reports;
  if (!fs::exists(dir)) {
    throw ConfigError("summary directory '" + dir + "' does not exist");
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") {
      reports.push_back(entry.path());
    }
  }
  std::sort(reports.begin(), reports.end());

  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-12s %-22s %12s %12s %14s %9s %14s %12s %10s\n",
                "policy", "predictor", "max_diff", "avg_diff", "var_diff",
                "jain_hf", "jain_ttft_p90", "throughput", "mean_util");
  out << buf;
  for (const auto& path : reports) {
    std::ifstream in(path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    const auto& s = j.at("summary");
    std::snprintf(buf, sizeof(buf),
                  "%-12s %-22s %12.2f %12.2f %14.2f %9.4f %14.4f %12.1f %10.4f\n",
                  j.value("policy", std::string("?")).c_str(),
                  j.value("predictor", std::string("?")).c_str(),
                  s.at("max_diff").get<double>(), s.at("avg_diff").get<double>(),
                  s.at("var_diff").get<double>(), s.at("jain_hf").get<double>(),
                  s.at("jain_ttft_p90").get<double>(),
                  s.at("throughput_tps").get<double>(),
                  s.at("mean_gpu_util").get<double>());
    out << buf;
  }
  return static_cast<int>(reports.size());
}

}  // namespace equinox
