#include "equinox/gpu_model.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "equinox/errors.hpp"

namespace equinox {

void PerfParams::validate() const {
  const struct {
    const char* name;
    double value;
  } fields[] = {
      {"prefill_linear", prefill_linear_ms},
      {"prefill_quad", prefill_quad_ms},
      {"decode_base", decode_base_ms},
      {"decode_per_ctx_token", decode_per_ctx_ms},
      {"refresh_overhead", refresh_ms},
      {"mem_per_token_bytes", mem_per_token_bytes},
      {"mem_capacity_bytes", mem_capacity_bytes},
      {"max_batch", static_cast<double>(max_batch)},
  };
  for (const auto& f : fields) {
    if (f.value <= 0.0) {
      throw ConfigError(std::string("perf parameter '") + f.name +
                        "' must be > 0");
    }
  }
}

long long BatchState::resident_kv_tokens() const {
  long long total = 0;
  for (const auto& m : members) total += m.input_tokens + m.generated;
  return total;
}

long long BatchState::reserved_kv_tokens() const {
  long long total = 0;
  for (const auto& m : members) {
    total += m.input_tokens + std::max(m.reserved_output, m.generated);
  }
  return total;
}

double iteration_time_ms(const BatchState& batch, int new_prefill_tokens,
                         const PerfParams& params) {
  const double p = static_cast<double>(new_prefill_tokens);
  const double resident = static_cast<double>(batch.resident_kv_tokens());
  double ms = params.prefill_linear_ms * p + params.prefill_quad_ms * p * p +
              params.decode_base_ms + params.decode_per_ctx_ms * resident;
  if (batch.composition_changed) ms += params.refresh_ms;
  return ms;
}

bool can_fit(const BatchState& batch, int input_tokens,
             int predicted_output_tokens, const PerfParams& params) {
  if (static_cast<int>(batch.members.size()) + 1 > params.max_batch) {
    return false;
  }
  const double claimed =
      static_cast<double>(batch.reserved_kv_tokens() + input_tokens +
                          predicted_output_tokens);
  return claimed * params.mem_per_token_bytes <= params.mem_capacity_bytes;
}

bool fits_alone(int input_tokens, int predicted_output_tokens,
                const PerfParams& params) {
  return can_fit(BatchState{}, input_tokens, predicted_output_tokens, params);
}

const ProfileEntry& GpuProfile::entry_for(int output_tokens) const {
  if (entries.empty()) throw EngineError("profile lookup on empty GpuProfile");
  for (const auto& e : entries) {
    if (output_tokens <= e.bucket_upper) return e;
  }
  return entries.back();
}

ProfileEntry& GpuProfile::entry_for(int output_tokens) {
  return const_cast<ProfileEntry&>(
      static_cast<const GpuProfile&>(*this).entry_for(output_tokens));
}

GpuProfile build_profile(const PerfParams& params,
                         const std::vector<int>& bucket_bounds,
                         int reference_input_tokens) {
  params.validate();
  if (bucket_bounds.empty()) throw ConfigError("profile needs bucket bounds");
  if (!std::is_sorted(bucket_bounds.begin(), bucket_bounds.end()) ||
      std::adjacent_find(bucket_bounds.begin(), bucket_bounds.end()) !=
          bucket_bounds.end() ||
      bucket_bounds.front() < 1) {
    throw ConfigError("profile bucket bounds must be strictly increasing and >= 1");
  }
  if (reference_input_tokens < 1) {
    throw ConfigError("profile reference input tokens must be >= 1");
  }

  GpuProfile profile;
  const double in = static_cast<double>(reference_input_tokens);
  int lower = 0;
  for (int upper : bucket_bounds) {
    const int midpoint = std::max(1, (lower + upper) / 2);
    // Solo run: the admission iteration prefills the prompt and produces the
    // first token; each later iteration decodes one token with the grown
    // context. The single composition change costs one refresh.
    double busy_ms = params.prefill_linear_ms * in +
                     params.prefill_quad_ms * in * in;
    for (int j = 1; j <= midpoint; ++j) {
      busy_ms += params.decode_base_ms +
                 params.decode_per_ctx_ms * (in + static_cast<double>(j - 1));
    }
    const double wall_ms = busy_ms + params.refresh_ms;
    ProfileEntry entry;
    entry.bucket_upper = upper;
    entry.latency_ms = wall_ms;
    entry.gpu_util = busy_ms / wall_ms;
    entry.tps = (in + static_cast<double>(midpoint)) / (wall_ms / 1000.0);
    profile.entries.push_back(entry);
    lower = upper;
  }
  return profile;
}

std::vector<int> default_bucket_bounds() {
  return {32, 64, 128, 256, 512, 1024, 2048, 4096};
}

void write_profile_csv(const GpuProfile& profile, std::ostream& out) {
  out << "bucket_upper,latency_ms,gpu_util,tps\n";
  char buf[128];
  for (const auto& e : profile.entries) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", e.bucket_upper,
                  e.latency_ms, e.gpu_util, e.tps);
    out << buf;
  }
}

GpuProfile read_profile_csv(std::istream& in) {
  GpuProfile profile;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty profile CSV");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ProfileEntry e;
    std::stringstream ss(line);
    char comma;
    if (!(ss >> e.bucket_upper >> comma >> e.latency_ms >> comma >>
          e.gpu_util >> comma >> e.tps)) {
      throw ParseError("profile CSV line " + std::to_string(line_no) +
                       " is malformed");
    }
    profile.entries.push_back(e);
  }
  return profile;
}

}  // namespace equinox
