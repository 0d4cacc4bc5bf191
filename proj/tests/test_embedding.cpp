#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "sparse2d/embedding.hpp"
#include "sparse2d/planner.hpp"

using namespace sparse2d;

TEST_CASE("table init: deterministic, bounded, zero moments") {
  auto a = init_table(3, 100, 16, 11);
  auto b = init_table(3, 100, 16, 11);
  CHECK(a.weights == b.weights);
  for (float v : a.moments) CHECK(v == 0.0f);
  for (float w : a.weights) CHECK(std::abs(w) <= 0.25f);  // 1/sqrt(16)
  auto c = init_table(3, 100, 16, 12);
  CHECK(a.weights != c.weights);
  CHECK_THROWS(init_table(0, 0, 16, 1));
}

TEST_CASE("pooling") {
  EmbeddingTable t;
  t.table_id = 0;
  t.rows = 2;
  t.dim = 2;
  t.weights = {1.0f, 0.0f, 0.0f, 2.0f};  // r0=(1,0), r1=(0,2)
  t.moments = {0.0f, 0.0f};
  ShardRef shard{&t, 0, 2};
  std::vector<ShardRef> shards = {shard};

  SUBCASE("singleton id copies the row") {
    std::vector<uint32_t> ids = {1};
    float out[2];
    pool_ids(shards, ids, out);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 2.0f);
  }

  SUBCASE("duplicate ids sum") {
    std::vector<uint32_t> ids = {1, 1};
    float out[2];
    pool_ids(shards, ids, out);
    CHECK(out[1] == 4.0f);
  }

  SUBCASE("hand-summed two-row oracle") {
    std::vector<uint32_t> ids = {0, 1};
    float out[2];
    pool_ids(shards, ids, out);
    CHECK(out[0] == 1.0f);
    CHECK(out[1] == 2.0f);
  }

  SUBCASE("empty id list pools to zero") {
    float out[2] = {9, 9};
    pool_ids(shards, {}, out);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
  }

  SUBCASE("out-of-range id names the table, id and ranges") {
    std::vector<uint32_t> ids = {7};
    float out[2];
    try {
      pool_ids(shards, ids, out);
      FAIL("expected out_of_range");
    } catch (const std::out_of_range& e) {
      const std::string msg = e.what();
      CHECK(msg.find("7") != std::string::npos);
      CHECK(msg.find("[0,2)") != std::string::npos);
    }
  }

  SUBCASE("batch wrapper") {
    std::vector<std::vector<uint32_t>> lists = {{0}, {0, 1}};
    auto pooled = lookup_and_pool(shards, 0, lists);
    REQUIRE(pooled.size() == 2);
    CHECK(pooled[0].vector[0] == 1.0f);
    CHECK(pooled[1].vector[1] == 2.0f);
  }
}

TEST_CASE("pooling is linear in the weights") {
  auto t = init_table(0, 40, 8, 5);
  auto t2 = t;
  for (auto& w : t2.weights) w *= 2.0f;  // exact in f32
  std::vector<ShardRef> s1 = {{&t, 0, 40}};
  std::vector<ShardRef> s2 = {{&t2, 0, 40}};
  std::vector<uint32_t> ids = {1, 5, 5, 17, 39};
  float a[8], b[8];
  pool_ids(s1, ids, a);
  pool_ids(s2, ids, b);
  for (int j = 0; j < 8; ++j) CHECK(b[j] == 2.0f * a[j]);

  auto t3 = t;
  for (auto& w : t3.weights) w *= 0.37f;
  std::vector<ShardRef> s3 = {{&t3, 0, 40}};
  float c[8];
  pool_ids(s3, ids, c);
  for (int j = 0; j < 8; ++j) {
    CHECK(c[j] == doctest::Approx(0.37f * a[j]).epsilon(1e-5));
  }
}

TEST_CASE("sharded pooling equals whole-table pooling") {
  auto t = init_table(0, 100, 4, 19);
  std::vector<ShardRef> whole = {{&t, 0, 100}};
  std::vector<ShardRef> split = {{&t, 0, 30}, {&t, 30, 71}, {&t, 71, 100}};
  std::vector<uint32_t> ids = {0, 29, 30, 70, 71, 99, 29};
  float a[4], b[4];
  pool_ids(whole, ids, a);
  pool_ids(split, ids, b);
  for (int j = 0; j < 4; ++j) {
    CHECK(b[j] == doctest::Approx(a[j]).epsilon(1e-6));
  }
}

TEST_CASE("apply row update") {
  auto t = init_table(0, 10, 4, 3);
  const auto before = t;
  ShardRef shard{&t, 0, 10};

  SUBCASE("zero delta with unchanged moment is a no-op") {
    std::vector<double> delta(4, 0.0);
    apply_row_update(shard, 3, delta, t.moments[3]);
    CHECK(t.weights == before.weights);
    CHECK(t.moments == before.moments);
  }

  SUBCASE("updates are sparse: untouched rows stay bitwise identical") {
    std::vector<double> delta = {0.5, -0.5, 0.25, 0.0};
    apply_row_update(shard, 3, delta, 2.0);
    for (uint32_t r = 0; r < 10; ++r) {
      if (r == 3) continue;
      for (uint32_t j = 0; j < 4; ++j) {
        CHECK(t.row(r)[j] == before.row(r)[j]);
      }
      CHECK(t.moments[r] == before.moments[r]);
    }
    CHECK(t.moments[3] == 2.0f);
    CHECK(t.row(3)[0] == doctest::Approx(before.row(3)[0] + 0.5));
  }

  SUBCASE("the fused update delta moves the weight by eta * g / denom") {
    // eta=0.1, g=(1,0,0,0), v'=1, c=1, eps=0 -> delta0 = -0.1
    const float w0 = t.row(5)[0];
    std::vector<double> delta = {-0.1 / (std::sqrt(1.0 / 1.0) + 0.0), 0, 0, 0};
    apply_row_update(shard, 5, delta, 1.0);
    CHECK(t.row(5)[0] == doctest::Approx(w0 - 0.1).epsilon(1e-6));
  }

  SUBCASE("negative moment is rejected, lower moment is allowed") {
    std::vector<double> delta(4, 0.0);
    apply_row_update(shard, 1, delta, 5.0);
    apply_row_update(shard, 1, delta, 1.0);  // averaging may lower it
    CHECK(t.moments[1] == 1.0f);
    CHECK_THROWS(apply_row_update(shard, 1, delta, -0.5));
    CHECK_THROWS(apply_row_update(shard, 42, delta, 0.0));
  }
}

TEST_CASE("plan coverage: group shards cover [0, R) without overlap") {
  std::vector<TableLoadProfile> profiles = {{0, 4096, 10.0, 97},
                                            {1, 4096, 3.0, 64}};
  const auto plan = plan_greedy(profiles, 3, ShardingStrategy::RowWise);
  validate_plan(plan, profiles);  // throws on violation
  for (const auto& p : profiles) {
    uint64_t covered = 0;
    for (const auto& e : plan.entries_for_table(p.table_id)) {
      covered += e.row_hi - e.row_lo;
    }
    CHECK(covered == p.num_rows);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  auto t0 = init_table(0, 50, 8, 1);
  auto t1 = init_table(1, 20, 8, 2);
  t1.moments[7] = 3.25f;
  const std::string path =
      (std::filesystem::temp_directory_path() / "s2d_ckpt_test.bin").string();
  std::vector<const EmbeddingTable*> tables = {&t0, &t1};
  save_checkpoint(path, tables);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].table_id == 0);
  CHECK(loaded[1].rows == 20);
  CHECK(loaded[1].dim == 8);
  CHECK(loaded[0].weights == t0.weights);
  CHECK(loaded[1].weights == t1.weights);
  CHECK(loaded[1].moments == t1.moments);
  std::filesystem::remove(path);

  // a non-checkpoint file is rejected
  const std::string junk =
      (std::filesystem::temp_directory_path() / "s2d_junk.bin").string();
  {
    FILE* f = std::fopen(junk.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS(load_checkpoint(junk));
  std::filesystem::remove(junk);
}
