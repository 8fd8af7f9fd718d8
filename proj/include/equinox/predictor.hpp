#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "equinox/gpu_model.hpp"
#include "equinox/workload.hpp"

#include "json.hpp"

namespace equinox {

/// Predicted output length plus the mapped request metrics.
struct PredictionRecord {
  int predicted_output_tokens = 1;
  double predicted_latency_ms = 0.0;
  double predicted_gpu_util = 0.0;
  double predicted_tps = 0.0;
};

/// Output-length prediction contract. Implementations must be deterministic
/// given their construction inputs; predict() may update internal stats.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int predict(const Request& req) = 0;
  virtual std::string name() const = 0;
};

/// Perfect prediction: returns the ground-truth output length.
class OraclePredictor final : public Predictor {
 public:
  int predict(const Request& req) override { return req.true_output_tokens; }
  std::string name() const override { return "oracle"; }
};

/// Oracle perturbed by Laplace noise with configurable mean L1 error.
/// Noise is keyed by (seed, request id), so predictions are stable across
/// repeated calls and independent of call order.
class NoisyOraclePredictor final : public Predictor {
 public:
  NoisyOraclePredictor(double target_l1, std::uint64_t seed);
  int predict(const Request& req) override;
  std::string name() const override;

 private:
  double target_l1_;
  std::uint64_t seed_;
};

/// Router scoring: a one-hot length signal from the thresholds blended with
/// learned per-tag bucket affinities.
struct RouterModel {
  std::vector<int> input_len_thresholds;  // k-1 ascending split points
  std::map<std::string, std::vector<double>> keyword_scores;  // rows sum to 1
  double mix_weight = 0.5;  // weight on the length signal
  int num_buckets = 3;

  int length_bucket(int input_tokens) const;
};

struct RouteResult {
  int bucket = 0;
  bool length_fallback = false;  // tag missing or unseen
};

/// Classifies a request; ties break toward the shorter bucket. Unseen tags
/// fall back to length-only scoring.
RouteResult route(const RouterModel& router, const Request& req);

/// Conditional-median output table for one output-length regime.
struct ExpertModel {
  int bucket = 0;
  std::vector<int> bin_upper;   // ascending input-length bin bounds
  std::vector<int> bin_value;   // predicted output tokens per bin
  int out_min = 1;              // training output range; predictions clamp
  int out_max = 1;

  int predict(int input_tokens) const;
};

struct MopeModel {
  std::vector<int> bucket_bounds;  // output-length percentile boundaries
  RouterModel router;
  std::vector<ExpertModel> experts;

  nlohmann::json to_json() const;
  static MopeModel from_json(const nlohmann::json& j);
};

/// Trains router + experts on a corpus with ground-truth outputs.
/// Bucket boundaries are the empirical output-length percentiles; the router
/// maximizes classification accuracy on the corpus; experts hold per-bucket
/// conditional medians over shared input-length bins. Deterministic.
/// Throws TrainingError for corpora under 100 requests or empty buckets.
MopeModel train_mope(const Trace& corpus,
                     const std::vector<double>& percentiles = {33.0, 66.0});

/// One unpartitioned conditional-median table over the whole corpus.
ExpertModel train_single_proxy(const Trace& corpus);

class MopePredictor final : public Predictor {
 public:
  explicit MopePredictor(MopeModel model);
  int predict(const Request& req) override;
  std::string name() const override { return "mope"; }
  const MopeModel& model() const { return model_; }
  std::int64_t length_fallbacks() const { return length_fallbacks_; }

 private:
  MopeModel model_;
  std::int64_t length_fallbacks_ = 0;
};

class SingleProxyPredictor final : public Predictor {
 public:
  explicit SingleProxyPredictor(ExpertModel table) : table_(std::move(table)) {}
  int predict(const Request& req) override {
    return table_.predict(req.input_tokens);
  }
  std::string name() const override { return "single_proxy"; }
  const ExpertModel& table() const { return table_; }

 private:
  ExpertModel table_;
};

/// Looks up the profile bucket containing `predicted_out` (clamping beyond
/// the last bucket) and attaches its metrics.
PredictionRecord map_metrics(int predicted_out, const GpuProfile& profile);

struct ObservedMetrics {
  int output_tokens = 1;
  double latency_ms = 0.0;
  double gpu_util = 0.0;
  double tps = 0.0;
};

/// Exponential-moving-average refresh of the bucket containing the observed
/// output length: new = (1 - ema_alpha) * old + ema_alpha * observed.
void update_map(GpuProfile& profile, const ObservedMetrics& observed,
                double ema_alpha);

/// Mean absolute output-token error of a predictor over a trace.
double corpus_l1_error(Predictor& predictor, const Trace& corpus);

/// Fraction of requests routed into their true percentile bucket.
double router_accuracy(const RouterModel& router,
                       const std::vector<int>& bucket_bounds,
                       const Trace& corpus);

}  // namespace equinox
