#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "equinox/engine.hpp"
#include "equinox/experiments.hpp"
#include "equinox/metrics.hpp"
#include "equinox/predictor.hpp"
#include "equinox/run_config.hpp"
#include "equinox/scheduler.hpp"
#include "equinox/workload.hpp"

namespace py = pybind11;
using namespace equinox;

namespace {

// JSON round-trip keeps the binding surface small: dict in, dict out.
py::object json_to_py(const nlohmann::json& j) {
  py::module_ json = py::module_::import("json");
  return json.attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& obj) {
  py::module_ json = py::module_::import("json");
  const std::string dumped = json.attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(dumped);
}

RunConfig config_from_py(const py::object& config) {
  if (py::isinstance<py::str>(config)) {
    return parse_run_config(nlohmann::json::parse(config.cast<std::string>()));
  }
  return parse_run_config(py_to_json(config));
}

std::unique_ptr<Predictor> predictor_by_name(const std::string& kind,
                                             double target_l1,
                                             std::uint64_t seed) {
  if (kind == "oracle") return std::make_unique<OraclePredictor>();
  if (kind == "noisy_oracle") {
    return std::make_unique<NoisyOraclePredictor>(target_l1, seed);
  }
  throw ConfigError("predictor kind must be oracle|noisy_oracle here");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic simulator for fairness-aware multi-tenant LLM serving";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<EngineError>(m, "EngineError", PyExc_RuntimeError);

  py::class_<Request>(m, "Request")
      .def(py::init<>())
      .def_readwrite("id", &Request::id)
      .def_readwrite("client_id", &Request::client_id)
      .def_readwrite("arrival_time_s", &Request::arrival_time_s)
      .def_readwrite("input_tokens", &Request::input_tokens)
      .def_readwrite("true_output_tokens", &Request::true_output_tokens)
      .def_readwrite("category_tag", &Request::category_tag)
      .def("__repr__", [](const Request& r) {
        std::ostringstream ss;
        ss << "Request(id=" << r.id << ", client='" << r.client_id
           << "', t=" << r.arrival_time_s << ", in=" << r.input_tokens
           << ", out=" << r.true_output_tokens << ")";
        return ss.str();
      });

  py::class_<Trace>(m, "Trace")
      .def_readonly("requests", &Trace::requests)
      .def_readonly("duration_s", &Trace::duration_s)
      .def_readonly("warnings", &Trace::warnings)
      .def_property_readonly("client_ids",
                             [](const Trace& t) {
                               std::vector<std::string> ids;
                               for (const auto& c : t.clients) {
                                 ids.push_back(c.client_id);
                               }
                               return ids;
                             })
      .def("hash", &trace_hash)
      .def("to_csv", &trace_csv_string)
      .def("__len__", [](const Trace& t) { return t.requests.size(); });

  m.def(
      "generate_scenario",
      [](const std::string& preset, std::uint64_t seed, double duration_s,
         double tag_noise) {
        ScenarioOptions opts;
        opts.tag_noise = tag_noise;
        return generate_scenario(preset, seed, duration_s, opts);
      },
      py::arg("preset"), py::arg("seed"), py::arg("duration_s"),
      py::arg("tag_noise") = 0.2,
      "Build a named synthetic scenario (balanced|poisson|overload|dynamic_increase)");
  m.def("load_trace", &load_trace, py::arg("path"));
  m.def(
      "make_prediction_corpus",
      [](int n, std::uint64_t seed, bool informative_lengths, double tag_noise) {
        CorpusOptions opts;
        opts.informative_lengths = informative_lengths;
        opts.tag_noise = tag_noise;
        return make_prediction_corpus(n, seed, opts);
      },
      py::arg("n"), py::arg("seed"), py::arg("informative_lengths") = true,
      py::arg("tag_noise") = 0.2);

  py::class_<PerfParams>(m, "PerfParams")
      .def(py::init<>())
      .def_readwrite("prefill_linear_ms", &PerfParams::prefill_linear_ms)
      .def_readwrite("prefill_quad_ms", &PerfParams::prefill_quad_ms)
      .def_readwrite("decode_base_ms", &PerfParams::decode_base_ms)
      .def_readwrite("decode_per_ctx_ms", &PerfParams::decode_per_ctx_ms)
      .def_readwrite("refresh_ms", &PerfParams::refresh_ms)
      .def_readwrite("mem_per_token_bytes", &PerfParams::mem_per_token_bytes)
      .def_readwrite("mem_capacity_bytes", &PerfParams::mem_capacity_bytes)
      .def_readwrite("max_batch", &PerfParams::max_batch);

  py::class_<ProfileEntry>(m, "ProfileEntry")
      .def_readonly("bucket_upper", &ProfileEntry::bucket_upper)
      .def_readonly("latency_ms", &ProfileEntry::latency_ms)
      .def_readonly("gpu_util", &ProfileEntry::gpu_util)
      .def_readonly("tps", &ProfileEntry::tps);

  py::class_<GpuProfile>(m, "GpuProfile")
      .def_readonly("entries", &GpuProfile::entries)
      .def("to_csv", [](const GpuProfile& p) {
        std::ostringstream ss;
        write_profile_csv(p, ss);
        return ss.str();
      });

  m.def("build_profile", &build_profile, py::arg("params"),
        py::arg("bucket_bounds"), py::arg("reference_input_tokens"));
  m.def("default_bucket_bounds", &default_bucket_bounds);

  m.def("jain_index", &jain_index, py::arg("values"),
        "Jain's fairness index: (sum x)^2 / (n * sum x^2)");
  m.def(
      "ufc_increment",
      [](double weight, int input_tokens, int predicted_output_tokens,
         double wait_s, double predicted_latency_ms, double delta,
         double output_weight) {
        Request req;
        req.input_tokens = input_tokens;
        ScheduleContext ctx;
        ctx.wait_s = wait_s;
        ctx.prediction.predicted_output_tokens = predicted_output_tokens;
        ctx.prediction.predicted_latency_ms = predicted_latency_ms;
        EquinoxParams params;
        params.delta = delta;
        params.output_weight = output_weight;
        return ufc_increment(req, ctx, weight, params);
      },
      py::arg("weight"), py::arg("input_tokens"),
      py::arg("predicted_output_tokens"), py::arg("wait_s") = 0.0,
      py::arg("predicted_latency_ms") = 0.0, py::arg("delta") = 0.1,
      py::arg("output_weight") = 4.0);
  m.def(
      "rfc_increment",
      [](double weight, double tps, double gpu_util) {
        PredictionRecord rec;
        rec.predicted_tps = tps;
        rec.predicted_gpu_util = gpu_util;
        return rfc_increment(rec, weight);
      },
      py::arg("weight"), py::arg("tps"), py::arg("gpu_util"));

  m.def(
      "predict_corpus_l1",
      [](const std::string& kind, const Trace& corpus, double target_l1,
         std::uint64_t seed, int experts) {
        if (kind == "mope") {
          PredictorConfig pc;
          pc.experts = experts;
          MopePredictor pred(train_mope(corpus, pc.bucket_percentiles()));
          return corpus_l1_error(pred, corpus);
        }
        if (kind == "single_proxy") {
          SingleProxyPredictor pred(train_single_proxy(corpus));
          return corpus_l1_error(pred, corpus);
        }
        auto pred = predictor_by_name(kind, target_l1, seed);
        return corpus_l1_error(*pred, corpus);
      },
      py::arg("kind"), py::arg("corpus"), py::arg("target_l1") = 33.0,
      py::arg("seed") = 1, py::arg("experts") = 3,
      "Mean absolute output-length error of a predictor over a corpus");

  m.def(
      "run",
      [](const py::object& config, int jobs) {
        RunConfig cfg = config_from_py(config);
        ExperimentRunner runner(std::move(cfg));
        const RunBatchResult batch = run_batch(runner, jobs);
        return json_to_py(batch.aggregate);
      },
      py::arg("config"), py::arg("jobs") = 1,
      "Run a config (dict or JSON string); returns the aggregate summary");

  m.def(
      "run_to_dir",
      [](const py::object& config, const std::string& out_dir, bool write_log,
         int jobs) {
        RunConfig cfg = config_from_py(config);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        ExperimentRunner runner(std::move(cfg));
        const RunBatchResult batch = run_batch(runner, jobs);
        write_run_outputs(runner, batch, write_log);
        return json_to_py(batch.aggregate);
      },
      py::arg("config"), py::arg("out_dir") = "", py::arg("write_log") = false,
      py::arg("jobs") = 1, "Run a config and write per-seed reports");

  m.def(
      "run_events",
      [](const py::object& config) {
        RunConfig cfg = config_from_py(config);
        if (cfg.seeds.size() != 1) {
          throw ConfigError("run_events expects exactly one seed");
        }
        ExperimentRunner runner(std::move(cfg));
        runner.prepare({});
        const SeedRun run = runner.execute(runner.config().policy,
                                           runner.config().predictor,
                                           runner.config().seeds[0]);
        return run.result.log.to_ndjson();
      },
      py::arg("config"),
      "Run one seed and return the event log as NDJSON text");

  m.def(
      "run_ablation",
      [](const py::object& config, int jobs) {
        RunConfig cfg = config_from_py(config);
        ExperimentRunner runner(std::move(cfg));
        const AblationResult result = run_ablation(runner, jobs);
        return json_to_py(result.table);
      },
      py::arg("config"), py::arg("jobs") = 1,
      "Run the config's scheduler x predictor grid; returns the table rows");

  m.def(
      "run_sweep_alpha",
      [](const py::object& config, int jobs) {
        RunConfig cfg = config_from_py(config);
        ExperimentRunner runner(std::move(cfg));
        const SweepResult result = run_sweep_alpha(runner, jobs);
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : result.points) {
          points.push_back({{"alpha", p.alpha},
                            {"jain_ttft_p90", p.jain_ttft_p90},
                            {"throughput_tps", p.throughput_tps},
                            {"jain_ttft_p90_norm", p.jain_norm},
                            {"throughput_norm", p.throughput_norm}});
        }
        return json_to_py(points);
      },
      py::arg("config"), py::arg("jobs") = 1);

  m.attr("__version__") = "0.1.0";
}
