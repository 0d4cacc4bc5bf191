#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "sparse2d/experiment.hpp"

using namespace sparse2d;

namespace {

ExperimentConfig mini_config() {
  ExperimentConfig cfg;
  cfg.set("topology.total_ranks", "8");
  cfg.set("topology.groups", "4");
  cfg.set("data.tables", "4");
  cfg.set("data.rows_per_table", "2000");
  cfg.set("model.dim", "16");
  cfg.set("run.steps", "3000");
  cfg.set("run.per_rank_batch", "2");
  cfg.set("run.eval_samples", "20000");
  cfg.set("data.zipf_exponent", "1.0");
  return cfg;
}

uint64_t max_lookup_bytes(const RunArtifact& art) {
  uint64_t mx = 0;
  for (const auto& t : art.result.traffic[0]) {
    mx = std::max(mx, t.bytes_sent);
  }
  return mx;
}

}  // namespace

TEST_CASE("axis names resolve to config keys") {
  CHECK(sweep_axis_key("c") == "optimizer.c");
  CHECK(sweep_axis_key("M") == "topology.groups");
  CHECK(sweep_axis_key("T") == "topology.total_ranks");
  CHECK(sweep_axis_key("sync_interval") == "run.sync_interval");
  CHECK(sweep_axis_key("run.sync_interval") == "run.sync_interval");
  CHECK_FALSE(sweep_axis_key("bogus").has_value());
  CHECK_THROWS_AS(run_sweep(mini_config(), "bogus", {"1"}, {1}),
                  ConfigError);
}

TEST_CASE("NE gap shrinks as the scaling factor approaches the group count") {
  const auto res =
      run_sweep(mini_config(), "c", {"1", "2", "4"}, {1, 2, 3});
  REQUIRE(res.points.size() == 3);
  const double g1 = res.points[0].ne_gap_vs_m1_pct;
  const double g2 = res.points[1].ne_gap_vs_m1_pct;
  const double g4 = res.points[2].ne_gap_vs_m1_pct;
  CHECK(g1 > 0.0);
  CHECK(g2 < g1);
  CHECK(g4 < g2);
  CHECK(res.comparison_csv.find(
            "value,final_ne,ne_gap_vs_M1,qps_sim,peak_mem_sim,"
            "imbalance_ratio") != std::string::npos);
}

TEST_CASE("M sweep: lookup bytes halve per doubling, gap at M=1 is zero") {
  ExperimentConfig cfg;
  cfg.set("topology.total_ranks", "8");
  cfg.set("data.tables", "2");
  cfg.set("data.rows_per_table", "256");
  cfg.set("model.dim", "16");
  cfg.set("model.dense_hidden", "4");
  cfg.set("model.over_hidden", "4");
  cfg.set("sharding.strategy", "table-wise");
  cfg.set("data.zipf_exponent", "0");
  cfg.set("run.steps", "5");
  cfg.set("run.per_rank_batch", "8");
  cfg.set("run.eval_samples", "256");

  const auto res = run_sweep(cfg, "M", {"1", "2", "4"}, {9});
  REQUIRE(res.points.size() == 3);
  const uint64_t b1 = max_lookup_bytes(res.points[0].per_seed[0]);
  const uint64_t b2 = max_lookup_bytes(res.points[1].per_seed[0]);
  const uint64_t b4 = max_lookup_bytes(res.points[2].per_seed[0]);
  CHECK(b1 > 0);
  CHECK(b1 == 2 * b2);
  CHECK(b1 == 4 * b4);
  // the M=1 point coincides with the baseline run
  CHECK(res.points[0].ne_gap_vs_m1_pct == 0.0);
}

TEST_CASE("run_train artifacts are byte-identical across reruns") {
  ExperimentConfig cfg;
  cfg.set("topology.total_ranks", "4");
  cfg.set("topology.groups", "2");
  cfg.set("data.tables", "2");
  cfg.set("data.rows_per_table", "64");
  cfg.set("model.dim", "8");
  cfg.set("run.steps", "20");
  cfg.set("run.eval_samples", "256");
  cfg.set("run.eval_cadence", "10");
  cfg.set("run.trace", "true");
  const auto a = run_train(cfg);
  const auto b = run_train(cfg);
  CHECK(a.metrics_csv == b.metrics_csv);
  CHECK(a.trace_csv == b.trace_csv);
  CHECK(a.config_hash == b.config_hash);
  CHECK(!a.trace_csv.empty());
}
