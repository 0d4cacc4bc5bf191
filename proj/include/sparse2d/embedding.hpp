#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparse2d {

// Row-major table of 32-bit weights plus one accumulated second-moment
// scalar per row.
struct EmbeddingTable {
  uint32_t table_id = 0;
  uint32_t rows = 0;
  uint32_t dim = 0;
  std::vector<float> weights;  // rows x dim
  std::vector<float> moments;  // rows

  float* row(uint32_t r) { return weights.data() + static_cast<size_t>(r) * dim; }
  const float* row(uint32_t r) const {
    return weights.data() + static_cast<size_t>(r) * dim;
  }
};

// weights ~ Uniform(-1/sqrt(D), +1/sqrt(D)), keyed by (seed, table_id, row);
// moments start at zero.
EmbeddingTable init_table(uint32_t table_id, uint32_t rows, uint32_t dim,
                          uint64_t seed);

// Non-owning view of a contiguous row range of one table. A shard is
// exclusively owned by one virtual rank.
struct ShardRef {
  EmbeddingTable* table = nullptr;
  uint32_t row_lo = 0;
  uint32_t row_hi = 0;  // half-open

  bool contains(uint32_t row) const { return row >= row_lo && row < row_hi; }
};

struct PooledEmbedding {
  uint32_t feature_id = 0;
  std::vector<float> vector;
};

// Sum-pools the rows named by `ids` over the shard set into `out` (dim
// floats). Canonical order: shards in the order presented, each shard's hits
// summed in id-occurrence order into a 64-bit partial that is rounded to f32
// before the cross-shard sum; this matches what the distributed lookup path
// produces from its per-owner wire partials. Empty id list -> zero vector.
// Throws std::out_of_range (naming table, ID and ranges) if an ID is covered
// by no shard.
void pool_ids(std::span<const ShardRef> shards, std::span<const uint32_t> ids,
              float* out);

// Batch form: one pooled vector per sample id-list.
std::vector<PooledEmbedding> lookup_and_pool(
    std::span<const ShardRef> shards, uint32_t feature_id,
    std::span<const std::vector<uint32_t>> per_sample_ids);

// weights[row] += delta; moments[row] = new_moment. Rows not named are
// untouched. new_moment may be lower than the current value (replica
// averaging can lower it) but must be nonnegative and finite.
void apply_row_update(const ShardRef& shard, uint32_t row,
                      std::span<const double> delta, double new_moment);

// Checkpoint container: "S2DCKPT1", u32 table count, then per table
// u32 version, u32 table_id, u64 rows, u64 dim, f32 weights, f32 moments.
// Little-endian throughout.
void save_checkpoint(const std::string& path,
                     std::span<const EmbeddingTable* const> tables);
std::vector<EmbeddingTable> load_checkpoint(const std::string& path);

}  // namespace sparse2d
