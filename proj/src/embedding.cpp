#include "sparse2d/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>

#include "sparse2d/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace sparse2d {

EmbeddingTable init_table(uint32_t table_id, uint32_t rows, uint32_t dim,
                          uint64_t seed) {
  if (rows < 1 || dim < 1) {
    throw std::invalid_argument("table needs rows >= 1 and dim >= 1");
  }
  EmbeddingTable t;
  t.table_id = table_id;
  t.rows = rows;
  t.dim = dim;
  t.weights.resize(static_cast<size_t>(rows) * dim);
  t.moments.assign(rows, 0.0f);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (uint32_t r = 0; r < rows; ++r) {
    CounterRng rng({seed, table_id, r});
    float* row = t.row(r);
    for (uint32_t j = 0; j < dim; ++j) {
      row[j] = static_cast<float>(rng.next_uniform_range(-bound, bound));
    }
  }
  return t;
}

void pool_ids(std::span<const ShardRef> shards, std::span<const uint32_t> ids,
              float* out) {
  if (shards.empty()) throw std::invalid_argument("empty shard set");
  const uint32_t dim = shards.front().table->dim;
  for (uint32_t j = 0; j < dim; ++j) out[j] = 0.0f;
  if (ids.empty()) return;

  // Validate coverage first so errors do not depend on shard order.
  for (uint32_t id : ids) {
    bool covered = false;
    for (const auto& s : shards) {
      if (s.contains(id)) {
        covered = true;
        break;
      }
    }
    if (!covered) {
      std::string ranges;
      for (const auto& s : shards) {
        ranges += " [" + std::to_string(s.row_lo) + "," +
                  std::to_string(s.row_hi) + ")";
      }
      throw std::out_of_range(
          "lookup id " + std::to_string(id) + " outside shard ranges of table " +
          std::to_string(shards.front().table->table_id) + ":" + ranges);
    }
  }

  // Per-shard f64 partial, rounded to f32 (the wire format), then summed
  // across shards in presentation order.
  double pool[512];
  double partial[512];
  if (dim > 512) throw std::invalid_argument("dim too large for pooling");
  for (uint32_t j = 0; j < dim; ++j) pool[j] = 0.0;
  for (const auto& shard : shards) {
    bool hit = false;
    for (uint32_t j = 0; j < dim; ++j) partial[j] = 0.0;
    for (uint32_t id : ids) {
      if (!shard.contains(id)) continue;
      hit = true;
      const float* row = shard.table->row(id);
      for (uint32_t j = 0; j < dim; ++j) {
        partial[j] += static_cast<double>(row[j]);
      }
    }
    if (!hit) continue;
    for (uint32_t j = 0; j < dim; ++j) {
      pool[j] += static_cast<double>(static_cast<float>(partial[j]));
    }
  }
  for (uint32_t j = 0; j < dim; ++j) {
    out[j] = static_cast<float>(pool[j]);
  }
}

std::vector<PooledEmbedding> lookup_and_pool(
    std::span<const ShardRef> shards, uint32_t feature_id,
    std::span<const std::vector<uint32_t>> per_sample_ids) {
  if (shards.empty()) throw std::invalid_argument("empty shard set");
  const uint32_t dim = shards.front().table->dim;
  std::vector<PooledEmbedding> out(per_sample_ids.size());
  for (size_t s = 0; s < per_sample_ids.size(); ++s) {
    out[s].feature_id = feature_id;
    out[s].vector.resize(dim);
    pool_ids(shards, per_sample_ids[s], out[s].vector.data());
  }
  return out;
}

void apply_row_update(const ShardRef& shard, uint32_t row,
                      std::span<const double> delta, double new_moment) {
  if (!shard.contains(row)) {
    throw std::out_of_range("row " + std::to_string(row) +
                            " outside shard range [" +
                            std::to_string(shard.row_lo) + "," +
                            std::to_string(shard.row_hi) + ")");
  }
  if (!(new_moment >= 0.0) || !std::isfinite(new_moment)) {
    throw std::invalid_argument("new_moment must be finite and >= 0 (got " +
                                std::to_string(new_moment) + ")");
  }
  const uint32_t dim = shard.table->dim;
  if (delta.size() != dim) {
    throw std::invalid_argument("delta length mismatch");
  }
  float* w = shard.table->row(row);
  for (uint32_t j = 0; j < dim; ++j) {
    w[j] = static_cast<float>(static_cast<double>(w[j]) + delta[j]);
  }
  shard.table->moments[row] = static_cast<float>(new_moment);
}

namespace {

constexpr char kMagic[8] = {'S', '2', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kFormatVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_pod(std::FILE* f, const T& v) {
  if (std::fwrite(&v, sizeof(T), 1, f) != 1) {
    throw std::runtime_error("checkpoint write failed");
  }
}

template <typename T>
void read_pod(std::FILE* f, T& v) {
  if (std::fread(&v, sizeof(T), 1, f) != 1) {
    throw std::runtime_error("checkpoint truncated");
  }
}

}  // namespace

void save_checkpoint(const std::string& path,
                     std::span<const EmbeddingTable* const> tables) {
  const std::string tmp = path + ".tmp";
  {
    FilePtr f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open checkpoint: " + tmp);
    if (std::fwrite(kMagic, 1, sizeof(kMagic), f.get()) != sizeof(kMagic)) {
      throw std::runtime_error("checkpoint write failed");
    }
    write_pod(f.get(), static_cast<uint32_t>(tables.size()));
    for (const EmbeddingTable* t : tables) {
      write_pod(f.get(), kFormatVersion);
      write_pod(f.get(), t->table_id);
      write_pod(f.get(), static_cast<uint64_t>(t->rows));
      write_pod(f.get(), static_cast<uint64_t>(t->dim));
      if (std::fwrite(t->weights.data(), sizeof(float), t->weights.size(),
                      f.get()) != t->weights.size() ||
          std::fwrite(t->moments.data(), sizeof(float), t->moments.size(),
                      f.get()) != t->moments.size()) {
        throw std::runtime_error("checkpoint write failed");
      }
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<EmbeddingTable> load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (std::fread(magic, 1, sizeof(magic), f.get()) != sizeof(magic) ||
      std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  uint32_t count = 0;
  read_pod(f.get(), count);
  std::vector<EmbeddingTable> tables(count);
  for (auto& t : tables) {
    uint32_t version = 0;
    read_pod(f.get(), version);
    if (version != kFormatVersion) {
      throw std::runtime_error("unsupported checkpoint version " +
                               std::to_string(version));
    }
    read_pod(f.get(), t.table_id);
    uint64_t rows = 0, dim = 0;
    read_pod(f.get(), rows);
    read_pod(f.get(), dim);
    t.rows = static_cast<uint32_t>(rows);
    t.dim = static_cast<uint32_t>(dim);
    t.weights.resize(rows * dim);
    t.moments.resize(rows);
    if (std::fread(t.weights.data(), sizeof(float), t.weights.size(),
                   f.get()) != t.weights.size() ||
        std::fread(t.moments.data(), sizeof(float), t.moments.size(),
                   f.get()) != t.moments.size()) {
      throw std::runtime_error("checkpoint truncated: " + path);
    }
  }
  return tables;
}

}  // namespace sparse2d
