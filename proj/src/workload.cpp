#include "equinox/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "equinox/errors.hpp"

namespace equinox {

ArrivalProcess ArrivalProcess::constant(double rate) {
  ArrivalProcess p;
  p.kind = ArrivalKind::Constant;
  p.rate_per_s = rate;
  return p;
}

ArrivalProcess ArrivalProcess::poisson(double rate) {
  ArrivalProcess p;
  p.kind = ArrivalKind::Poisson;
  p.rate_per_s = rate;
  return p;
}

ArrivalProcess ArrivalProcess::piecewise(std::vector<RateSegment> segments) {
  ArrivalProcess p;
  p.kind = ArrivalKind::Piecewise;
  p.segments = std::move(segments);
  return p;
}

double ArrivalProcess::rate_at(double t) const {
  if (kind != ArrivalKind::Piecewise) return rate_per_s;
  double rate = segments.empty() ? 0.0 : segments.front().rate_per_s;
  for (const auto& seg : segments) {
    if (t >= seg.start_s) rate = seg.rate_per_s;
  }
  return rate;
}

LengthDist LengthDist::point(int v) {
  LengthDist d;
  d.kind = Kind::Point;
  d.value = v;
  return d;
}

LengthDist LengthDist::uniform(int lo, int hi) {
  LengthDist d;
  d.kind = Kind::UniformInt;
  d.lo = lo;
  d.hi = hi;
  return d;
}

LengthDist LengthDist::choice(std::vector<int> values) {
  LengthDist d;
  d.kind = Kind::Choice;
  d.values = std::move(values);
  return d;
}

int LengthDist::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Point:
      return value;
    case Kind::UniformInt:
      return static_cast<int>(rng.uniform_int(lo, hi));
    case Kind::Choice:
      return values[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(values.size()) - 1))];
  }
  return value;
}

bool LengthDist::supports(int v) const {
  switch (kind) {
    case Kind::Point:
      return v == value;
    case Kind::UniformInt:
      return v >= lo && v <= hi;
    case Kind::Choice:
      return std::find(values.begin(), values.end(), v) != values.end();
  }
  return false;
}

const ClientSpec* Trace::find_client(std::string_view client_id) const {
  for (const auto& c : clients) {
    if (c.client_id == client_id) return &c;
  }
  return nullptr;
}

std::optional<ScenarioPreset> parse_preset(std::string_view name) {
  if (name == "balanced") return ScenarioPreset::Balanced;
  if (name == "poisson") return ScenarioPreset::Poisson;
  if (name == "overload") return ScenarioPreset::Overload;
  if (name == "dynamic_increase") return ScenarioPreset::DynamicIncrease;
  return std::nullopt;
}

std::string_view preset_name(ScenarioPreset preset) {
  switch (preset) {
    case ScenarioPreset::Balanced:
      return "balanced";
    case ScenarioPreset::Poisson:
      return "poisson";
    case ScenarioPreset::Overload:
      return "overload";
    case ScenarioPreset::DynamicIncrease:
      return "dynamic_increase";
  }
  return "unknown";
}

namespace {

// Arrival instants for one client over [0, duration). Constant processes
// place the k-th arrival at k/rate so a zero-length window yields no
// requests; Poisson processes accumulate exponential gaps.
std::vector<double> arrival_times(const ArrivalProcess& proc, double duration_s,
                                  Rng& rng) {
  std::vector<double> times;
  switch (proc.kind) {
    case ArrivalKind::Constant: {
      for (std::int64_t k = 1;; ++k) {
        const double t = static_cast<double>(k) / proc.rate_per_s;
        if (t >= duration_s) break;
        times.push_back(t);
      }
      break;
    }
    case ArrivalKind::Poisson: {
      double t = rng.exponential(proc.rate_per_s);
      while (t < duration_s) {
        times.push_back(t);
        t += rng.exponential(proc.rate_per_s);
      }
      break;
    }
    case ArrivalKind::Piecewise: {
      for (std::size_t i = 0; i < proc.segments.size(); ++i) {
        const double seg_start = proc.segments[i].start_s;
        const double seg_end = i + 1 < proc.segments.size()
                                   ? proc.segments[i + 1].start_s
                                   : duration_s;
        const double rate = proc.segments[i].rate_per_s;
        for (std::int64_t k = 1;; ++k) {
          const double t = seg_start + static_cast<double>(k) / rate;
          if (t >= std::min(seg_end, duration_s)) break;
          times.push_back(t);
        }
      }
      break;
    }
    case ArrivalKind::Replay:
      break;
  }
  return times;
}

int percentile_nearest_rank(const std::vector<int>& sorted, double pct) {
  const auto n = static_cast<std::int64_t>(sorted.size());
  std::int64_t rank =
      static_cast<std::int64_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::int64_t>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

constexpr const char* kBucketTags[3] = {"short", "medium", "long"};

// Tags each request with its output-length bucket (empirical 33rd/66th
// percentile split), flipping to a different bucket with probability
// `noise`. The flips share one stream keyed by request index so tagging
// never perturbs arrival or length sampling.
void assign_category_tags(std::vector<Request>& requests, std::uint64_t seed,
                          double noise) {
  if (requests.empty()) return;
  std::vector<int> outputs;
  outputs.reserve(requests.size());
  for (const auto& r : requests) outputs.push_back(r.true_output_tokens);
  std::sort(outputs.begin(), outputs.end());
  const int b1 = percentile_nearest_rank(outputs, 33.0);
  const int b2 = percentile_nearest_rank(outputs, 66.0);

  Rng tag_rng = derive_stream(seed, "category_tags");
  for (auto& r : requests) {
    int bucket = r.true_output_tokens <= b1 ? 0
                 : r.true_output_tokens <= b2 ? 1
                                              : 2;
    if (tag_rng.uniform01() < noise) {
      const int offset = 1 + static_cast<int>(tag_rng.uniform_int(0, 1));
      bucket = (bucket + offset) % 3;
    }
    r.category_tag = kBucketTags[bucket];
  }
}

}  // namespace

Trace generate_from_specs(std::vector<ClientSpec> clients, std::uint64_t seed,
                          double duration_s, const ScenarioOptions& opts) {
  if (duration_s <= 0.0) throw ConfigError("scenario duration must be > 0");
  for (const auto& c : clients) {
    if (c.weight <= 0.0)
      throw ConfigError("client '" + c.client_id + "' has non-positive weight");
  }

  Trace trace;
  trace.duration_s = duration_s;
  trace.clients = std::move(clients);

  for (const auto& spec : trace.clients) {
    Rng arrivals_rng =
        derive_stream(seed, "arrivals", fnv1a(spec.client_id));
    Rng length_rng = derive_stream(seed, "lengths", fnv1a(spec.client_id));
    for (double t : arrival_times(spec.arrivals, duration_s, arrivals_rng)) {
      Request r;
      r.client_id = spec.client_id;
      r.arrival_time_s = t;
      r.input_tokens = spec.input_len.sample(length_rng);
      r.true_output_tokens = spec.output_len.sample(length_rng);
      trace.requests.push_back(std::move(r));
    }
  }

  // Stable sort keeps the client-roster order on simultaneous arrivals.
  std::stable_sort(trace.requests.begin(), trace.requests.end(),
                   [](const Request& a, const Request& b) {
                     return a.arrival_time_s < b.arrival_time_s;
                   });
  for (std::size_t i = 0; i < trace.requests.size(); ++i) {
    trace.requests[i].id = static_cast<std::int64_t>(i);
  }
  assign_category_tags(trace.requests, seed, opts.tag_noise);
  return trace;
}

Trace generate_scenario(ScenarioPreset preset, std::uint64_t seed,
                        double duration_s, const ScenarioOptions& opts) {
  std::vector<ClientSpec> clients;
  switch (preset) {
    case ScenarioPreset::Balanced:
      clients = {
          {"client1", 1.0, ArrivalProcess::constant(2.0), LengthDist::point(100),
           LengthDist::point(400)},
          {"client2", 1.0, ArrivalProcess::constant(1.0), LengthDist::point(100),
           LengthDist::point(900)},
      };
      break;
    case ScenarioPreset::Poisson:
      clients = {
          {"client1", 1.0, ArrivalProcess::poisson(16.0), LengthDist::point(512),
           LengthDist::point(32)},
          {"client2", 1.0, ArrivalProcess::poisson(3.0), LengthDist::point(32),
           LengthDist::point(512)},
      };
      break;
    case ScenarioPreset::Overload:
      clients = {
          {"client1", 1.0, ArrivalProcess::constant(20.0), LengthDist::point(20),
           LengthDist::point(180)},
          {"client2", 1.0, ArrivalProcess::constant(2.0), LengthDist::point(200),
           LengthDist::point(1800)},
      };
      break;
    case ScenarioPreset::DynamicIncrease:
      return generate_dynamic_increase(seed, duration_s, opts);
  }
  return generate_from_specs(std::move(clients), seed, duration_s, opts);
}

Trace generate_scenario(std::string_view preset, std::uint64_t seed,
                        double duration_s, const ScenarioOptions& opts) {
  const auto parsed = parse_preset(preset);
  if (!parsed) {
    throw ConfigError("unknown scenario preset '" + std::string(preset) +
                      "' (expected balanced|poisson|overload|dynamic_increase)");
  }
  return generate_scenario(*parsed, seed, duration_s, opts);
}

Trace generate_dynamic_increase(std::uint64_t seed, double duration_s,
                                const ScenarioOptions& opts) {
  if (duration_s <= 0.0) throw ConfigError("scenario duration must be > 0");
  std::vector<ClientSpec> clients = {
      {"client1", 1.0, ArrivalProcess::constant(1.0), LengthDist::point(100),
       LengthDist::point(400)},
      {"client2", 1.0,
       ArrivalProcess::piecewise({{0.0, 1.0}, {duration_s / 2.0, 4.0}}),
       LengthDist::point(100), LengthDist::point(400)},
  };
  return generate_from_specs(std::move(clients), seed, duration_s, opts);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file '" + path + "'");

  static constexpr std::string_view kHeader =
      "client_id,arrival_time_s,input_tokens,output_tokens,category_tag";
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("trace file '" + path + "' is empty (missing header)");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw ParseError("trace file '" + path + "' has unexpected header '" +
                     line + "'");
  }

  Trace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw ParseError("trace line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    Request r;
    r.client_id = fields[0];
    if (r.client_id.empty()) {
      throw ParseError("trace line " + std::to_string(line_no) + ": empty client_id");
    }
    try {
      r.arrival_time_s = std::stod(fields[1]);
      r.input_tokens = std::stoi(fields[2]);
      r.true_output_tokens = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw ParseError("trace line " + std::to_string(line_no) + ": malformed numeric field");
    }
    if (r.arrival_time_s < 0.0) {
      throw ParseError("trace line " + std::to_string(line_no) + ": negative arrival time");
    }
    if (r.input_tokens < 1 || r.true_output_tokens < 1) {
      throw ParseError("trace line " + std::to_string(line_no) +
                       ": token counts must be >= 1");
    }
    r.category_tag = fields[4];
    trace.requests.push_back(std::move(r));
  }

  bool sorted = std::is_sorted(trace.requests.begin(), trace.requests.end(),
                               [](const Request& a, const Request& b) {
                                 return a.arrival_time_s < b.arrival_time_s;
                               });
  if (!sorted) {
    std::stable_sort(trace.requests.begin(), trace.requests.end(),
                     [](const Request& a, const Request& b) {
                       return a.arrival_time_s < b.arrival_time_s;
                     });
    trace.warnings.push_back("arrival times out of order; rows were re-sorted");
  }
  for (std::size_t i = 0; i < trace.requests.size(); ++i) {
    trace.requests[i].id = static_cast<std::int64_t>(i);
  }

  // Roster in first-appearance order, with empirical length supports.
  for (const auto& r : trace.requests) {
    if (trace.find_client(r.client_id)) continue;
    ClientSpec spec;
    spec.client_id = r.client_id;
    spec.weight = 1.0;
    spec.arrivals.kind = ArrivalKind::Replay;
    trace.clients.push_back(std::move(spec));
  }
  for (auto& spec : trace.clients) {
    std::vector<int> ins, outs;
    for (const auto& r : trace.requests) {
      if (r.client_id != spec.client_id) continue;
      ins.push_back(r.input_tokens);
      outs.push_back(r.true_output_tokens);
    }
    std::sort(ins.begin(), ins.end());
    ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
    std::sort(outs.begin(), outs.end());
    outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
    spec.input_len = LengthDist::choice(std::move(ins));
    spec.output_len = LengthDist::choice(std::move(outs));
  }

  trace.duration_s =
      trace.requests.empty() ? 0.0 : trace.requests.back().arrival_time_s;
  return trace;
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << "client_id,arrival_time_s,input_tokens,output_tokens,category_tag\n";
  char buf[64];
  for (const auto& r : trace.requests) {
    std::snprintf(buf, sizeof(buf), "%.9f", r.arrival_time_s);
    out << r.client_id << ',' << buf << ',' << r.input_tokens << ','
        << r.true_output_tokens << ',' << r.category_tag << '\n';
  }
}

std::string trace_csv_string(const Trace& trace) {
  std::ostringstream ss;
  write_trace_csv(trace, ss);
  return ss.str();
}

std::string trace_hash(const Trace& trace) {
  const std::uint64_t h = fnv1a(trace_csv_string(trace));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

Trace make_prediction_corpus(int n_requests, std::uint64_t seed,
                             const CorpusOptions& opts) {
  if (n_requests < 1) throw ConfigError("corpus size must be >= 1");

  Trace trace;
  ClientSpec spec;
  spec.client_id = "corpus";
  spec.weight = 1.0;
  spec.arrivals = ArrivalProcess::constant(100.0);
  spec.input_len = LengthDist::uniform(8, 1024);
  spec.output_len = LengthDist::uniform(4, 1500);
  trace.clients.push_back(spec);
  trace.duration_s = static_cast<double>(n_requests) / 100.0;

  Rng rng = derive_stream(seed, "corpus");
  trace.requests.reserve(static_cast<std::size_t>(n_requests));
  for (int i = 0; i < n_requests; ++i) {
    Request r;
    r.id = i;
    r.client_id = spec.client_id;
    r.arrival_time_s = 0.01 * static_cast<double>(i + 1);
    const int cls = static_cast<int>(rng.uniform_int(0, 2));
    switch (cls) {
      case 0:
        r.true_output_tokens = static_cast<int>(rng.uniform_int(4, 52));
        r.input_tokens = opts.informative_lengths
                             ? static_cast<int>(rng.uniform_int(8, 96))
                             : 128;
        break;
      case 1:
        r.true_output_tokens = static_cast<int>(rng.uniform_int(53, 209));
        r.input_tokens = opts.informative_lengths
                             ? static_cast<int>(rng.uniform_int(64, 320))
                             : 128;
        break;
      default:
        r.true_output_tokens = static_cast<int>(rng.uniform_int(210, 1500));
        r.input_tokens = opts.informative_lengths
                             ? static_cast<int>(rng.uniform_int(192, 1024))
                             : 128;
        break;
    }
    trace.requests.push_back(std::move(r));
  }
  assign_category_tags(trace.requests, seed, opts.tag_noise);
  return trace;
}

}  // namespace equinox
