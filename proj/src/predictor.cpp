#include "equinox/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "equinox/errors.hpp"
#include "equinox/rng.hpp"

namespace equinox {

NoisyOraclePredictor::NoisyOraclePredictor(double target_l1, std::uint64_t seed)
    : target_l1_(target_l1), seed_(seed) {
  if (target_l1 < 0.0) throw ConfigError("noisy oracle target_l1 must be >= 0");
}

int NoisyOraclePredictor::predict(const Request& req) {
  Rng rng(mix_keys(mix_keys(seed_, fnv1a("noisy_oracle")),
                   static_cast<std::uint64_t>(req.id)));
  const double noise = rng.laplace(target_l1_);
  const double predicted = std::round(static_cast<double>(req.true_output_tokens) + noise);
  return static_cast<int>(std::max(1.0, predicted));
}

std::string NoisyOraclePredictor::name() const {
  return "noisy_oracle(l1=" + std::to_string(target_l1_) + ")";
}

int RouterModel::length_bucket(int input_tokens) const {
  for (std::size_t i = 0; i < input_len_thresholds.size(); ++i) {
    if (input_tokens <= input_len_thresholds[i]) return static_cast<int>(i);
  }
  return num_buckets - 1;
}

RouteResult route(const RouterModel& router, const Request& req) {
  const int len_bucket = router.length_bucket(req.input_tokens);

  const std::vector<double>* affinity = nullptr;
  if (!req.category_tag.empty()) {
    const auto it = router.keyword_scores.find(req.category_tag);
    if (it != router.keyword_scores.end()) affinity = &it->second;
  }
  if (affinity == nullptr) {
    return {len_bucket, true};
  }

  RouteResult result{0, false};
  double best = -1.0;
  for (int b = 0; b < router.num_buckets; ++b) {
    const double length_score = b == len_bucket ? 1.0 : 0.0;
    const double score = router.mix_weight * length_score +
                         (1.0 - router.mix_weight) * (*affinity)[static_cast<std::size_t>(b)];
    if (score > best) {  // ties keep the shorter bucket
      best = score;
      result.bucket = b;
    }
  }
  return result;
}

int ExpertModel::predict(int input_tokens) const {
  std::size_t idx = bin_upper.size() - 1;
  for (std::size_t i = 0; i < bin_upper.size(); ++i) {
    if (input_tokens <= bin_upper[i]) {
      idx = i;
      break;
    }
  }
  return std::clamp(bin_value[idx], out_min, out_max);
}

namespace {

std::string bucket_label(int bucket, int num_buckets) {
  if (num_buckets == 3) {
    static constexpr const char* kNames[3] = {"short", "medium", "long"};
    return kNames[bucket];
  }
  return "bucket" + std::to_string(bucket);
}

int nearest_rank(const std::vector<int>& sorted, double pct) {
  const auto n = static_cast<std::int64_t>(sorted.size());
  auto rank = static_cast<std::int64_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::int64_t>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

int true_bucket(int output_tokens, const std::vector<int>& bounds) {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (output_tokens <= bounds[i]) return static_cast<int>(i);
  }
  return static_cast<int>(bounds.size());
}

int lower_median(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

// Up to `limit` evenly ranked distinct values, padded past the maximum when
// the corpus has fewer distinct lengths than requested cut points.
std::vector<int> candidate_cuts(std::vector<int> values, std::size_t limit,
                                std::size_t min_count) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<int> cuts;
  if (values.size() <= limit) {
    cuts = values;
  } else {
    for (std::size_t i = 1; i <= limit; ++i) {
      const std::size_t rank = i * values.size() / limit;
      cuts.push_back(values[std::min(rank, values.size()) - 1]);
    }
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  }
  while (cuts.size() < min_count) {
    cuts.push_back(cuts.empty() ? 1 : cuts.back() + 1);
  }
  return cuts;
}

// Best ascending threshold assignment maximizing length-only classification
// accuracy, via partition DP over prefix counts. Ties resolve to the
// smallest cut indices.
std::vector<int> fit_length_thresholds(const std::vector<int>& inputs,
                                       const std::vector<int>& buckets,
                                       int num_buckets) {
  if (num_buckets < 2) return {};
  const std::vector<int> cuts =
      candidate_cuts(inputs, 48, static_cast<std::size_t>(num_buckets));
  const std::size_t m = cuts.size();

  // prefix[b][j]: requests of true bucket b with input <= cuts[j]
  std::vector<std::vector<long long>> prefix(
      static_cast<std::size_t>(num_buckets), std::vector<long long>(m, 0));
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const auto b = static_cast<std::size_t>(buckets[r]);
    const auto it = std::lower_bound(cuts.begin(), cuts.end(), inputs[r]);
    if (it != cuts.end()) {
      prefix[b][static_cast<std::size_t>(it - cuts.begin())] += 1;
    }
  }
  for (std::size_t b = 0; b < prefix.size(); ++b) {
    for (std::size_t j = 1; j < m; ++j) prefix[b][j] += prefix[b][j - 1];
  }
  long long total_last = 0;
  for (int v : buckets) total_last += v == num_buckets - 1 ? 1 : 0;

  const int levels = num_buckets - 1;
  std::vector<std::vector<long long>> dp(static_cast<std::size_t>(levels),
                                         std::vector<long long>(m, -1));
  std::vector<std::vector<std::size_t>> from(static_cast<std::size_t>(levels),
                                             std::vector<std::size_t>(m, 0));
  for (std::size_t j = 0; j < m; ++j) dp[0][j] = prefix[0][j];
  for (int lvl = 1; lvl < levels; ++lvl) {
    for (std::size_t j = static_cast<std::size_t>(lvl); j < m; ++j) {
      for (std::size_t i = static_cast<std::size_t>(lvl - 1); i < j; ++i) {
        const long long acc = dp[static_cast<std::size_t>(lvl - 1)][i] +
                              prefix[static_cast<std::size_t>(lvl)][j] -
                              prefix[static_cast<std::size_t>(lvl)][i];
        if (acc > dp[static_cast<std::size_t>(lvl)][j]) {
          dp[static_cast<std::size_t>(lvl)][j] = acc;
          from[static_cast<std::size_t>(lvl)][j] = i;
        }
      }
    }
  }

  long long best = -1;
  std::size_t best_j = static_cast<std::size_t>(levels - 1);
  for (std::size_t j = static_cast<std::size_t>(levels - 1); j < m; ++j) {
    const long long tail =
        total_last - prefix[static_cast<std::size_t>(num_buckets - 1)][j];
    const long long acc = dp[static_cast<std::size_t>(levels - 1)][j] + tail;
    if (acc > best) {
      best = acc;
      best_j = j;
    }
  }

  std::vector<int> thresholds(static_cast<std::size_t>(levels));
  std::size_t j = best_j;
  for (int lvl = levels - 1; lvl >= 0; --lvl) {
    thresholds[static_cast<std::size_t>(lvl)] = cuts[j];
    if (lvl > 0) j = from[static_cast<std::size_t>(lvl)][j];
  }
  return thresholds;
}

std::vector<int> shared_input_bins(const std::vector<int>& inputs) {
  std::vector<int> bins = candidate_cuts(inputs, 8, 1);
  bins.back() = std::numeric_limits<int>::max();
  return bins;
}

std::size_t bin_index(const std::vector<int>& bin_upper, int input_tokens) {
  for (std::size_t i = 0; i < bin_upper.size(); ++i) {
    if (input_tokens <= bin_upper[i]) return i;
  }
  return bin_upper.size() - 1;
}

ExpertModel fit_expert(int bucket, const std::vector<int>& bin_upper,
                       const std::vector<int>& member_inputs,
                       const std::vector<int>& member_outputs) {
  ExpertModel expert;
  expert.bucket = bucket;
  expert.bin_upper = bin_upper;
  expert.out_min = *std::min_element(member_outputs.begin(), member_outputs.end());
  expert.out_max = *std::max_element(member_outputs.begin(), member_outputs.end());

  const int fallback = lower_median(member_outputs);
  std::vector<std::vector<int>> cells(bin_upper.size());
  for (std::size_t r = 0; r < member_inputs.size(); ++r) {
    cells[bin_index(bin_upper, member_inputs[r])].push_back(member_outputs[r]);
  }
  expert.bin_value.resize(bin_upper.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    expert.bin_value[i] = cells[i].empty() ? fallback : lower_median(cells[i]);
  }
  return expert;
}

}  // namespace

MopeModel train_mope(const Trace& corpus, const std::vector<double>& percentiles) {
  const std::size_t n = corpus.requests.size();
  if (n < 100) {
    throw TrainingError("corpus too small: " + std::to_string(n) +
                        " requests (need >= 100)");
  }
  for (double p : percentiles) {
    if (p <= 0.0 || p >= 100.0) {
      throw ConfigError("bucket percentiles must lie in (0, 100)");
    }
  }
  if (!std::is_sorted(percentiles.begin(), percentiles.end())) {
    throw ConfigError("bucket percentiles must be increasing");
  }
  const int num_buckets = static_cast<int>(percentiles.size()) + 1;

  std::vector<int> outputs, inputs;
  outputs.reserve(n);
  inputs.reserve(n);
  for (const auto& r : corpus.requests) {
    outputs.push_back(r.true_output_tokens);
    inputs.push_back(r.input_tokens);
  }
  std::vector<int> sorted_outputs = outputs;
  std::sort(sorted_outputs.begin(), sorted_outputs.end());

  MopeModel model;
  for (double p : percentiles) {
    model.bucket_bounds.push_back(nearest_rank(sorted_outputs, p));
  }

  std::vector<int> buckets(n);
  std::vector<long long> bucket_counts(static_cast<std::size_t>(num_buckets), 0);
  for (std::size_t r = 0; r < n; ++r) {
    buckets[r] = true_bucket(outputs[r], model.bucket_bounds);
    bucket_counts[static_cast<std::size_t>(buckets[r])] += 1;
  }
  for (int b = 0; b < num_buckets; ++b) {
    if (bucket_counts[static_cast<std::size_t>(b)] == 0) {
      throw TrainingError("output bucket '" + bucket_label(b, num_buckets) +
                          "' has no corpus members");
    }
  }

  model.router.num_buckets = num_buckets;
  model.router.input_len_thresholds =
      fit_length_thresholds(inputs, buckets, num_buckets);

  // Per-tag bucket affinities (empirical, row-normalized).
  std::map<std::string, std::vector<double>> counts;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& tag = corpus.requests[r].category_tag;
    if (tag.empty()) continue;
    auto& row = counts[tag];
    row.resize(static_cast<std::size_t>(num_buckets), 0.0);
    row[static_cast<std::size_t>(buckets[r])] += 1.0;
  }
  for (auto& [tag, row] : counts) {
    double sum = 0.0;
    for (double v : row) sum += v;
    for (double& v : row) v /= sum;
  }
  model.router.keyword_scores = std::move(counts);

  // Mixing weight by grid search on corpus accuracy; the first maximum wins.
  double best_acc = -1.0;
  double best_mix = 0.0;
  for (int step = 0; step <= 20; ++step) {
    model.router.mix_weight = static_cast<double>(step) / 20.0;
    long long correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (route(model.router, corpus.requests[r]).bucket == buckets[r]) {
        ++correct;
      }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best_acc) {
      best_acc = acc;
      best_mix = model.router.mix_weight;
    }
  }
  model.router.mix_weight = best_mix;

  // Experts are fit on the router's own partition, over input bins shared
  // with the single-proxy baseline.
  const std::vector<int> bins = shared_input_bins(inputs);
  std::vector<std::vector<int>> routed_inputs(static_cast<std::size_t>(num_buckets));
  std::vector<std::vector<int>> routed_outputs(static_cast<std::size_t>(num_buckets));
  for (std::size_t r = 0; r < n; ++r) {
    const int cls = route(model.router, corpus.requests[r]).bucket;
    routed_inputs[static_cast<std::size_t>(cls)].push_back(inputs[r]);
    routed_outputs[static_cast<std::size_t>(cls)].push_back(outputs[r]);
  }
  for (int b = 0; b < num_buckets; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    if (routed_outputs[bi].empty()) {
      throw TrainingError("router sends no corpus members to bucket '" +
                          bucket_label(b, num_buckets) + "'");
    }
    model.experts.push_back(
        fit_expert(b, bins, routed_inputs[bi], routed_outputs[bi]));
  }
  return model;
}

ExpertModel train_single_proxy(const Trace& corpus) {
  const std::size_t n = corpus.requests.size();
  if (n < 100) {
    throw TrainingError("corpus too small: " + std::to_string(n) +
                        " requests (need >= 100)");
  }
  std::vector<int> outputs, inputs;
  outputs.reserve(n);
  inputs.reserve(n);
  for (const auto& r : corpus.requests) {
    outputs.push_back(r.true_output_tokens);
    inputs.push_back(r.input_tokens);
  }
  return fit_expert(0, shared_input_bins(inputs), inputs, outputs);
}

MopePredictor::MopePredictor(MopeModel model) : model_(std::move(model)) {
  if (model_.experts.empty()) {
    throw TrainingError("MoPE predictor constructed without trained experts");
  }
}

int MopePredictor::predict(const Request& req) {
  const RouteResult r = route(model_.router, req);
  if (r.length_fallback) ++length_fallbacks_;
  return model_.experts[static_cast<std::size_t>(r.bucket)].predict(
      req.input_tokens);
}

PredictionRecord map_metrics(int predicted_out, const GpuProfile& profile) {
  const ProfileEntry& entry = profile.entry_for(predicted_out);
  PredictionRecord rec;
  rec.predicted_output_tokens = predicted_out;
  rec.predicted_latency_ms = entry.latency_ms;
  rec.predicted_gpu_util = entry.gpu_util;
  rec.predicted_tps = entry.tps;
  return rec;
}

void update_map(GpuProfile& profile, const ObservedMetrics& observed,
                double ema_alpha) {
  if (ema_alpha <= 0.0 || ema_alpha > 1.0) {
    throw ConfigError("ema_alpha must lie in (0, 1]");
  }
  ProfileEntry& entry = profile.entry_for(observed.output_tokens);
  entry.latency_ms =
      (1.0 - ema_alpha) * entry.latency_ms + ema_alpha * observed.latency_ms;
  entry.gpu_util =
      (1.0 - ema_alpha) * entry.gpu_util + ema_alpha * observed.gpu_util;
  entry.tps = (1.0 - ema_alpha) * entry.tps + ema_alpha * observed.tps;
}

double corpus_l1_error(Predictor& predictor, const Trace& corpus) {
  if (corpus.requests.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : corpus.requests) {
    total += std::abs(static_cast<double>(predictor.predict(r)) -
                      static_cast<double>(r.true_output_tokens));
  }
  return total / static_cast<double>(corpus.requests.size());
}

double router_accuracy(const RouterModel& router,
                       const std::vector<int>& bucket_bounds,
                       const Trace& corpus) {
  if (corpus.requests.empty()) return 0.0;
  long long correct = 0;
  for (const auto& r : corpus.requests) {
    if (route(router, r).bucket == true_bucket(r.true_output_tokens, bucket_bounds)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.requests.size());
}

nlohmann::json MopeModel::to_json() const {
  nlohmann::json j;
  j["bucket_bounds"] = bucket_bounds;
  j["router"] = {
      {"input_len_thresholds", router.input_len_thresholds},
      {"mix_weight", router.mix_weight},
      {"num_buckets", router.num_buckets},
      {"keyword_scores", router.keyword_scores},
  };
  j["experts"] = nlohmann::json::array();
  for (const auto& e : experts) {
    j["experts"].push_back({
        {"bucket", e.bucket},
        {"bin_upper", e.bin_upper},
        {"bin_value", e.bin_value},
        {"out_min", e.out_min},
        {"out_max", e.out_max},
    });
  }
  return j;
}

MopeModel MopeModel::from_json(const nlohmann::json& j) {
  MopeModel model;
  try {
    model.bucket_bounds = j.at("bucket_bounds").get<std::vector<int>>();
    const auto& r = j.at("router");
    model.router.input_len_thresholds =
        r.at("input_len_thresholds").get<std::vector<int>>();
    model.router.mix_weight = r.at("mix_weight").get<double>();
    model.router.num_buckets = r.at("num_buckets").get<int>();
    model.router.keyword_scores =
        r.at("keyword_scores").get<std::map<std::string, std::vector<double>>>();
    for (const auto& ej : j.at("experts")) {
      ExpertModel e;
      e.bucket = ej.at("bucket").get<int>();
      e.bin_upper = ej.at("bin_upper").get<std::vector<int>>();
      e.bin_value = ej.at("bin_value").get<std::vector<int>>();
      e.out_min = ej.at("out_min").get<int>();
      e.out_max = ej.at("out_max").get<int>();
      model.experts.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed MoPE model JSON: ") + e.what());
  }
  return model;
}

}  // namespace equinox
