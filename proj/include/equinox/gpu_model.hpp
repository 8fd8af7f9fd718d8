#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace equinox {

/// Parametric cost model of one GPU engine with continuous batching.
/// An iteration costs a_p*P + b_p*P^2 for newly prefilled tokens P, plus
/// a_d + b_d * resident_kv_tokens for the decode step, plus a refresh
/// overhead h whenever the batch composition changed.
struct PerfParams {
  double prefill_linear_ms = 0.05;  // a_p, ms per new input token
  double prefill_quad_ms = 1e-6;    // b_p, ms per squared input token
  double decode_base_ms = 5.0;      // a_d, ms per iteration
  double decode_per_ctx_ms = 0.002; // b_d, ms per resident KV token
  double refresh_ms = 15.0;         // h, ms per batch-composition change
  double mem_per_token_bytes = 0.5 * 1024.0 * 1024.0;           // m
  double mem_capacity_bytes = 60.0 * 1024.0 * 1024.0 * 1024.0;  // M
  int max_batch = 64;               // L_b

  /// KV token budget implied by (M, m).
  double token_capacity() const { return mem_capacity_bytes / mem_per_token_bytes; }

  void validate() const;  // throws ConfigError on non-positive fields
};

struct BatchMember {
  std::int64_t request_id = 0;
  int input_tokens = 0;
  int generated = 0;        // output tokens produced so far
  int reserved_output = 0;  // output reservation made at admission
};

struct BatchState {
  std::vector<BatchMember> members;
  bool composition_changed = false;

  /// Physical KV footprint: sum of input + generated tokens.
  long long resident_kv_tokens() const;
  /// Reserved footprint: sum of input + max(reserved, generated) tokens.
  /// Admission control works against this so predicted growth is held back.
  long long reserved_kv_tokens() const;
};

/// Wall time of one engine iteration in milliseconds.
double iteration_time_ms(const BatchState& batch, int new_prefill_tokens,
                         const PerfParams& params);

/// True iff a candidate with the given input length and predicted output
/// fits the batch-size and memory-reservation constraints.
bool can_fit(const BatchState& batch, int input_tokens,
             int predicted_output_tokens, const PerfParams& params);

/// True iff the candidate could ever fit in an empty batch.
bool fits_alone(int input_tokens, int predicted_output_tokens,
                const PerfParams& params);

struct ProfileEntry {
  int bucket_upper = 0;      // inclusive upper bound on output tokens
  double latency_ms = 0.0;
  double gpu_util = 0.0;     // in [0, 1]
  double tps = 0.0;          // (input + output) tokens per second
};

/// Offline lookup from output-token buckets to expected request metrics.
struct GpuProfile {
  std::vector<ProfileEntry> entries;  // bucket_upper strictly increasing

  bool empty() const { return entries.size() == 0; }
  /// Entry whose bucket contains `output_tokens`; values beyond the last
  /// bound clamp to the last entry.
  const ProfileEntry& entry_for(int output_tokens) const;
  ProfileEntry& entry_for(int output_tokens);
};

/// Simulates one solo request per bucket midpoint (prefill of
/// `reference_input_tokens`, then decode to the midpoint) and records wall
/// latency, busy/(busy+refresh) utilization, and (in+out)/wall throughput.
GpuProfile build_profile(const PerfParams& params,
                         const std::vector<int>& bucket_bounds,
                         int reference_input_tokens);

/// Default bucket bounds spanning [32, 4096] by powers of two.
std::vector<int> default_bucket_bounds();

void write_profile_csv(const GpuProfile& profile, std::ostream& out);
GpuProfile read_profile_csv(std::istream& in);

}  // namespace equinox
