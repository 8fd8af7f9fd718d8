#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "equinox/rng.hpp"

namespace equinox {

/// One inference request. `true_output_tokens` is ground truth used by the
/// simulator and the oracle predictor; other predictors never see it.
struct Request {
  std::int64_t id = 0;
  std::string client_id;
  double arrival_time_s = 0.0;
  int input_tokens = 1;
  int true_output_tokens = 1;
  std::string category_tag;  // empty = untagged
};

enum class ArrivalKind { Constant, Poisson, Piecewise, Replay };

struct RateSegment {
  double start_s = 0.0;
  double rate_per_s = 0.0;
};

struct ArrivalProcess {
  ArrivalKind kind = ArrivalKind::Constant;
  double rate_per_s = 1.0;             // Constant / Poisson
  std::vector<RateSegment> segments;   // Piecewise, sorted by start_s

  static ArrivalProcess constant(double rate);
  static ArrivalProcess poisson(double rate);
  static ArrivalProcess piecewise(std::vector<RateSegment> segments);

  /// Configured rate at time t (piecewise-aware).
  double rate_at(double t) const;
};

struct LengthDist {
  enum class Kind { Point, UniformInt, Choice };
  Kind kind = Kind::Point;
  int value = 1;       // Point
  int lo = 1, hi = 1;  // UniformInt
  std::vector<int> values;  // Choice (uniform over values)

  static LengthDist point(int v);
  static LengthDist uniform(int lo, int hi);
  static LengthDist choice(std::vector<int> values);

  int sample(Rng& rng) const;
  bool supports(int v) const;
};

struct ClientSpec {
  std::string client_id;
  double weight = 1.0;  // priority weight, > 0
  ArrivalProcess arrivals;
  LengthDist input_len;
  LengthDist output_len;
};

/// Immutable request stream plus the client roster that produced it.
struct Trace {
  std::vector<Request> requests;  // sorted by arrival_time_s
  std::vector<ClientSpec> clients;
  double duration_s = 0.0;
  std::vector<std::string> warnings;

  const ClientSpec* find_client(std::string_view client_id) const;
};

enum class ScenarioPreset { Balanced, Poisson, Overload, DynamicIncrease };

std::optional<ScenarioPreset> parse_preset(std::string_view name);
std::string_view preset_name(ScenarioPreset preset);

struct ScenarioOptions {
  /// Probability that a request's category tag is flipped to a different
  /// output-length bucket, making the tag a learnable but imperfect signal.
  double tag_noise = 0.2;
};

/// Builds the named synthetic scenario. Deterministic: identical
/// (preset, seed, duration) yield byte-identical traces.
Trace generate_scenario(ScenarioPreset preset, std::uint64_t seed,
                        double duration_s, const ScenarioOptions& opts = {});
Trace generate_scenario(std::string_view preset, std::uint64_t seed,
                        double duration_s, const ScenarioOptions& opts = {});

/// Two equal clients; the second quadruples its rate at duration/2.
Trace generate_dynamic_increase(std::uint64_t seed, double duration_s,
                                const ScenarioOptions& opts = {});

/// Generates a trace from explicit client specs (the preset generators are
/// thin wrappers over this).
Trace generate_from_specs(std::vector<ClientSpec> clients, std::uint64_t seed,
                          double duration_s, const ScenarioOptions& opts = {});

/// Loads a trace from CSV with header
/// `client_id,arrival_time_s,input_tokens,output_tokens,category_tag`.
/// Rows out of order are sorted with a warning recorded on the trace;
/// malformed rows raise ParseError naming the line.
Trace load_trace(const std::string& path);

void write_trace_csv(const Trace& trace, std::ostream& out);
std::string trace_csv_string(const Trace& trace);

/// Content hash of the canonical CSV serialization (16 hex chars).
std::string trace_hash(const Trace& trace);

struct CorpusOptions {
  bool informative_lengths = true;
  double tag_noise = 0.2;
};

/// Synthetic prediction-training corpus: three latent request classes with
/// distinct output medians (roughly thirds below 53, 53-210, and above 210
/// tokens), tagged with configurable label noise. Input lengths correlate
/// with the class unless informative_lengths is off.
Trace make_prediction_corpus(int n_requests, std::uint64_t seed,
                             const CorpusOptions& opts = {});

}  // namespace equinox
