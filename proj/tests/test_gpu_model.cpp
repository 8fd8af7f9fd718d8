#include "doctest.h"

#include <sstream>

#include "equinox/errors.hpp"
#include "equinox/gpu_model.hpp"

using namespace equinox;

TEST_CASE("iteration time matches the stated cost formula") {
  PerfParams p;  // defaults: a_p=0.05, b_p=1e-6, a_d=5, b_d=0.002, h=15

  BatchState empty;
  CHECK(iteration_time_ms(empty, 0, p) == doctest::Approx(5.0));  // idle tick

  BatchState changed;
  changed.composition_changed = true;
  // 0.05*1000 + 1e-6*1e6 + 5 + 0 + 15 = 71
  CHECK(iteration_time_ms(changed, 1000, p) == doctest::Approx(71.0).epsilon(1e-12));

  BatchState ctx;
  ctx.members.push_back({1, 100, 50, 60});
  const double base = iteration_time_ms(ctx, 0, p);
  ctx.members.push_back({2, 100, 50, 60});  // doubles resident tokens
  CHECK(iteration_time_ms(ctx, 0, p) > base);
}

TEST_CASE("can_fit enforces the batch-size and memory reservation bounds") {
  PerfParams p;
  BatchState batch;
  CHECK(can_fit(batch, 10, 20, p));  // empty batch, small request

  p.max_batch = 2;
  batch.members = {{1, 10, 0, 20}, {2, 10, 0, 20}};
  CHECK_FALSE(can_fit(batch, 1, 1, p));  // L_b bound regardless of memory

  PerfParams tight;
  tight.mem_per_token_bytes = 1.0;
  tight.mem_capacity_bytes = 10.0;
  BatchState fresh;
  CHECK_FALSE(can_fit(fresh, 5, 6, tight));  // 11 > 10
  CHECK(can_fit(fresh, 5, 5, tight));        // 10 <= 10
  CHECK_FALSE(fits_alone(5, 6, tight));
}

TEST_CASE("reservations track generated tokens past the prediction") {
  BatchState batch;
  batch.members.push_back({1, 10, 0, 5});
  CHECK(batch.reserved_kv_tokens() == 15);
  batch.members[0].generated = 8;  // under-predicted; growth claims memory
  CHECK(batch.reserved_kv_tokens() == 18);
  CHECK(batch.resident_kv_tokens() == 18);
}

TEST_CASE("single-bucket profile equals the one-iteration closed form") {
  PerfParams p;
  const int in = 512;
  const GpuProfile profile = build_profile(p, {1}, in);
  REQUIRE(profile.entries.size() == 1);
  const double expected = p.prefill_linear_ms * in +
                          p.prefill_quad_ms * in * in +
                          (p.decode_base_ms + p.decode_per_ctx_ms * in) +
                          p.refresh_ms;
  CHECK(profile.entries[0].latency_ms == doctest::Approx(expected).epsilon(1e-12));
  const double busy = expected - p.refresh_ms;
  CHECK(profile.entries[0].gpu_util == doctest::Approx(busy / expected));
  CHECK(profile.entries[0].tps ==
        doctest::Approx((in + 1) / (expected / 1000.0)));
}

TEST_CASE("default profile reproduces the latency/throughput/utilization shapes") {
  const GpuProfile profile =
      build_profile(PerfParams{}, default_bucket_bounds(), 1);
  REQUIRE(profile.entries.size() == 8);

  for (std::size_t i = 1; i < profile.entries.size(); ++i) {
    CHECK(profile.entries[i].latency_ms > profile.entries[i - 1].latency_ms);
    CHECK(profile.entries[i].gpu_util >= profile.entries[i - 1].gpu_util);
  }

  std::size_t argmax = 0;
  for (std::size_t i = 1; i < profile.entries.size(); ++i) {
    if (profile.entries[i].tps > profile.entries[argmax].tps) argmax = i;
  }
  CHECK(argmax > 0);
  CHECK(argmax < profile.entries.size() - 1);
  CHECK(profile.entries.front().gpu_util < 0.9);
  for (const auto& e : profile.entries) {
    CHECK(e.gpu_util > 0.0);
    CHECK(e.gpu_util <= 1.0);
    CHECK(e.tps > 0.0);
  }
}

TEST_CASE("profile lookup clamps past the last bucket") {
  const GpuProfile profile =
      build_profile(PerfParams{}, default_bucket_bounds(), 1);
  CHECK(profile.entry_for(1).bucket_upper == 32);
  CHECK(profile.entry_for(33).bucket_upper == 64);
  CHECK(profile.entry_for(100000).bucket_upper == 4096);
}

TEST_CASE("profile CSV round-trips") {
  const GpuProfile profile =
      build_profile(PerfParams{}, default_bucket_bounds(), 1);
  std::stringstream ss;
  write_profile_csv(profile, ss);
  const GpuProfile loaded = read_profile_csv(ss);
  REQUIRE(loaded.entries.size() == profile.entries.size());
  for (std::size_t i = 0; i < profile.entries.size(); ++i) {
    CHECK(loaded.entries[i].bucket_upper == profile.entries[i].bucket_upper);
    CHECK(loaded.entries[i].latency_ms ==
          doctest::Approx(profile.entries[i].latency_ms).epsilon(1e-6));
  }
}

TEST_CASE("invalid parameters and bounds are rejected") {
  PerfParams bad;
  bad.decode_base_ms = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(build_profile(PerfParams{}, {}, 1), ConfigError);
  CHECK_THROWS_AS(build_profile(PerfParams{}, {64, 32}, 1), ConfigError);
  CHECK_THROWS_AS(build_profile(PerfParams{}, {32, 64}, 0), ConfigError);
}
