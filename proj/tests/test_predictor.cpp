#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "equinox/errors.hpp"
#include "equinox/predictor.hpp"
#include "equinox/run_config.hpp"
#include "equinox/workload.hpp"
#include "test_util.hpp"

using namespace equinox;
using equinox::testing::make_trace;

TEST_CASE("oracle returns the true output length") {
  OraclePredictor oracle;
  Request r;
  r.true_output_tokens = 400;
  CHECK(oracle.predict(r) == 400);
}

TEST_CASE("noisy oracle hits its target L1 and is call-order stable") {
  const Trace corpus = make_prediction_corpus(12000, 3);
  for (double target : {33.0, 80.0}) {
    NoisyOraclePredictor noisy(target, 17);
    const double l1 = corpus_l1_error(noisy, corpus);
    CHECK(l1 > target * 0.9);
    CHECK(l1 < target * 1.1);
  }
  NoisyOraclePredictor noisy(33.0, 17);
  const int first = noisy.predict(corpus.requests[5]);
  noisy.predict(corpus.requests[9]);
  CHECK(noisy.predict(corpus.requests[5]) == first);
  for (const auto& r : corpus.requests) {
    CHECK(noisy.predict(r) >= 1);
  }
}

TEST_CASE("mope boundaries equal the corpus percentiles computed by brute force") {
  const Trace corpus = make_prediction_corpus(5000, 21);
  const MopeModel model = train_mope(corpus);

  std::vector<int> outputs;
  for (const auto& r : corpus.requests) outputs.push_back(r.true_output_tokens);
  std::sort(outputs.begin(), outputs.end());
  const auto rank = [&](double pct) {
    return outputs[static_cast<std::size_t>(
               std::ceil(pct / 100.0 * outputs.size())) - 1];
  };
  REQUIRE(model.bucket_bounds.size() == 2);
  CHECK(model.bucket_bounds[0] == rank(33.0));
  CHECK(model.bucket_bounds[1] == rank(66.0));
}

TEST_CASE("perfectly separable tags give a 100% accurate router") {
  CorpusOptions opts;
  opts.tag_noise = 0.0;
  const Trace corpus = make_prediction_corpus(2000, 5, opts);
  const MopeModel model = train_mope(corpus);
  CHECK(router_accuracy(model.router, model.bucket_bounds, corpus) ==
        doctest::Approx(1.0));
}

TEST_CASE("with uninformative lengths, router accuracy tracks the tag channel") {
  // Tags carry an 80% signal; constant input lengths carry none. Accuracy on
  // a held-out split lands near 0.8 (checked by brute-force confusion).
  CorpusOptions opts;
  opts.informative_lengths = false;
  opts.tag_noise = 0.2;
  const Trace full = make_prediction_corpus(10000, 29, opts);

  Trace train, held;
  train.clients = held.clients = full.clients;
  for (const auto& r : full.requests) {
    (r.id < 7000 ? train : held).requests.push_back(r);
  }
  const MopeModel model = train_mope(train);
  const double accuracy = router_accuracy(model.router, model.bucket_bounds, held);
  CHECK(accuracy > 0.77);
  CHECK(accuracy < 0.83);
}

TEST_CASE("route falls back to lengths on unseen tags and honors extremes") {
  RouterModel router;
  router.num_buckets = 3;
  router.input_len_thresholds = {50, 200};
  router.keyword_scores["growth"] = {0.0, 0.1, 0.9};
  router.mix_weight = 0.5;

  Request below;
  below.input_tokens = 10;
  CHECK(route(router, below).bucket == 0);
  CHECK(route(router, below).length_fallback);

  Request unseen;
  unseen.input_tokens = 120;
  unseen.category_tag = "mystery";
  const RouteResult fallback = route(router, unseen);
  CHECK(fallback.bucket == 1);
  CHECK(fallback.length_fallback);

  router.mix_weight = 0.0;  // pure keyword signal
  Request tagged;
  tagged.input_tokens = 10;
  tagged.category_tag = "growth";
  const RouteResult keyword = route(router, tagged);
  CHECK(keyword.bucket == 2);
  CHECK_FALSE(keyword.length_fallback);

  router.keyword_scores["tie"] = {0.4, 0.4, 0.2};
  Request tie;
  tie.input_tokens = 10000;
  tie.category_tag = "tie";
  CHECK(route(router, tie).bucket == 0);  // ties go to the shorter bucket
}

TEST_CASE("mope beats the single proxy on distinct per-bucket medians") {
  const Trace corpus = make_prediction_corpus(10000, 31);
  MopePredictor mope(train_mope(corpus));
  SingleProxyPredictor single(train_single_proxy(corpus));
  const double mope_l1 = corpus_l1_error(mope, corpus);
  const double single_l1 = corpus_l1_error(single, corpus);
  CHECK(mope_l1 < single_l1);
}

TEST_CASE("training errors name the offending bucket") {
  // Two point masses cannot fill three percentile buckets.
  std::vector<equinox::testing::ReqSpec> specs;
  for (int i = 0; i < 200; ++i) {
    specs.push_back({"a", 0.01 * i, 100, i % 10 < 7 ? 32 : 512});
  }
  const Trace corpus = make_trace(specs, {"a"}, 10.0);
  try {
    train_mope(corpus);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("medium") != std::string::npos);
  }

  const Trace tiny = make_prediction_corpus(50, 1);
  CHECK_THROWS_AS(train_mope(tiny), TrainingError);
  CHECK_THROWS_AS(train_single_proxy(tiny), TrainingError);
}

TEST_CASE("map_metrics looks up, clamps, and stays within profile ranges") {
  const GpuProfile profile =
      build_profile(PerfParams{}, default_bucket_bounds(), 1);
  const PredictionRecord in_bucket = map_metrics(100, profile);
  CHECK(in_bucket.predicted_output_tokens == 100);
  CHECK(in_bucket.predicted_latency_ms == profile.entry_for(100).latency_ms);

  const PredictionRecord clamped = map_metrics(100000, profile);
  CHECK(clamped.predicted_latency_ms == profile.entries.back().latency_ms);

  for (int out : {1, 32, 33, 500, 4096, 9999}) {
    const PredictionRecord rec = map_metrics(out, profile);
    double lat_min = 1e300, lat_max = 0.0;
    for (const auto& e : profile.entries) {
      lat_min = std::min(lat_min, e.latency_ms);
      lat_max = std::max(lat_max, e.latency_ms);
    }
    CHECK(rec.predicted_latency_ms >= lat_min);
    CHECK(rec.predicted_latency_ms <= lat_max);
  }
}

TEST_CASE("map lookup of a one-token prediction equals the closed form") {
  PerfParams p;
  const int in = 64;
  const GpuProfile profile = build_profile(p, {1, 32, 64}, in);
  const PredictionRecord rec = map_metrics(1, profile);
  const double expected = p.prefill_linear_ms * in + p.prefill_quad_ms * in * in +
                          p.decode_base_ms + p.decode_per_ctx_ms * in +
                          p.refresh_ms;
  CHECK(rec.predicted_latency_ms == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("update_map applies the EMA per field") {
  GpuProfile profile;
  profile.entries.push_back({100, 100.0, 0.5, 1000.0});

  GpuProfile replaced = profile;
  update_map(replaced, {50, 200.0, 0.9, 2000.0}, 1.0);
  CHECK(replaced.entries[0].latency_ms == doctest::Approx(200.0));
  CHECK(replaced.entries[0].gpu_util == doctest::Approx(0.9));

  GpuProfile eased = profile;
  update_map(eased, {50, 200.0, 0.5, 1000.0}, 0.1);
  CHECK(eased.entries[0].latency_ms == doctest::Approx(110.0));

  GpuProfile converging = profile;
  for (int i = 0; i < 200; ++i) {
    update_map(converging, {50, 40.0, 0.7, 500.0}, 0.2);
  }
  CHECK(converging.entries[0].latency_ms == doctest::Approx(40.0).epsilon(1e-9));
  CHECK(converging.entries[0].tps == doctest::Approx(500.0).epsilon(1e-9));

  CHECK_THROWS_AS(update_map(profile, {50, 1.0, 0.5, 1.0}, 0.0), ConfigError);
}

TEST_CASE("mope model JSON round-trips") {
  const Trace corpus = make_prediction_corpus(1000, 2);
  const MopeModel model = train_mope(corpus);
  const MopeModel restored = MopeModel::from_json(model.to_json());
  CHECK(restored.bucket_bounds == model.bucket_bounds);
  CHECK(restored.router.mix_weight == model.router.mix_weight);
  CHECK(restored.router.input_len_thresholds == model.router.input_len_thresholds);
  REQUIRE(restored.experts.size() == model.experts.size());
  for (std::size_t i = 0; i < model.experts.size(); ++i) {
    CHECK(restored.experts[i].bin_value == model.experts[i].bin_value);
  }

  MopePredictor a{model};
  MopePredictor b{restored};
  for (const auto& r : corpus.requests) {
    CHECK(a.predict(r) == b.predict(r));
  }
}

TEST_CASE("expert counts map to percentile splits") {
  PredictorConfig pc;
  pc.experts = 1;
  CHECK(pc.bucket_percentiles().empty());
  pc.experts = 3;
  CHECK(pc.bucket_percentiles() == std::vector<double>{100.0 / 3.0, 200.0 / 3.0});
  pc.experts = 5;
  REQUIRE(pc.bucket_percentiles().size() == 4);
  CHECK(pc.bucket_percentiles()[0] == doctest::Approx(20.0));
}
