#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sparse2d/cost_model.hpp"
#include "sparse2d/rng.hpp"

using namespace sparse2d;

TEST_CASE("memory overhead formula") {
  CHECK(memory_overhead(1700.0, 1, 1024) == 0.0);
  CHECK(memory_overhead(1700.0, 4, 1024) == doctest::Approx(4.98).epsilon(0.01));
  // doubling T halves the overhead
  const double a = memory_overhead(800.0, 4, 256);
  const double b = memory_overhead(800.0, 4, 512);
  CHECK(a == doctest::Approx(2.0 * b));
}

TEST_CASE("sync latency formula and identity") {
  CHECK(sync_latency(1700.0, 1, 1024, 100.0) == 0.0);
  // overhead 5 GB at 100 GB/s -> 0.1 s
  CHECK(sync_latency(5.0 * 1024, 2, 1024, 100.0) ==
        doctest::Approx(0.1).epsilon(1e-12));

  // identity holds bitwise across a randomized sweep
  CounterRng rng({42});
  for (int i = 0; i < 100; ++i) {
    const double s = rng.next_uniform_range(1.0, 5000.0);
    const uint32_t m = 1 + static_cast<uint32_t>(rng.next_u64() % 16);
    const uint32_t t = m * (1 + static_cast<uint32_t>(rng.next_u64() % 128));
    const double bwv = rng.next_uniform_range(1.0, 500.0);
    CHECK(sync_latency(s, m, t, bwv) == 2.0 * memory_overhead(s, m, t) / bwv);
  }
}

TEST_CASE("cost monotonicity in M and T") {
  double prev = -1.0;
  for (uint32_t m : {1u, 2u, 4u, 8u, 16u}) {
    const double v = memory_overhead(1000.0, m, 1024);
    CHECK(v >= prev);
    prev = v;
  }
  prev = 1e18;
  for (uint32_t t : {256u, 512u, 1024u, 2048u}) {
    const double v = sync_latency(1000.0, 4, t, 100.0);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("qps scaling factor") {
  CHECK(qps_scaling_factor(100.0, 8, 200.0, 16) == doctest::Approx(1.0));
  // the two derivable cells that match their published factors
  CHECK(100.0 * qps_scaling_factor(1.76e5, 256, 5.61e5, 1024) ==
        doctest::Approx(79.7).epsilon(0.01));
  CHECK(100.0 * qps_scaling_factor(1.76e5, 256, 6.76e5, 1024) ==
        doctest::Approx(96.0).epsilon(0.01));
  CHECK_THROWS(qps_scaling_factor(0.0, 8, 200.0, 16));
  CHECK_THROWS(qps_scaling_factor(100.0, 16, 200.0, 8));
}

TEST_CASE("cluster spec validation") {
  ClusterSpec bad{1024, 3, 1700.0, 100.0};  // 3 does not divide 1024
  CHECK_THROWS(bad.validate());
  ClusterSpec ok{1024, 4, 1700.0, 100.0};
  const auto est = estimate_cost(ok);
  CHECK(est.mem_overhead_gb > 0);
  CHECK(est.sync_latency_s == 2.0 * est.mem_overhead_gb / 100.0);
}
