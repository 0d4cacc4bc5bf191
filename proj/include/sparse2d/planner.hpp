#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparse2d/data.hpp"

namespace sparse2d {

struct TableLoadProfile {
  uint32_t table_id = 0;
  uint64_t size_bytes = 0;
  double expected_lookups_per_batch = 0.0;
  // Needed to emit row ranges; the CLI derives it from size_bytes and the
  // embedding dim when the manifest does not carry it.
  uint64_t num_rows = 1;
};

struct PlanEntry {
  uint32_t table_id = 0;
  uint32_t row_lo = 0;
  uint32_t row_hi = 0;
  uint32_t local_rank = 0;
};

enum class ShardingStrategy { TableWise, RowWise };

ShardingStrategy parse_strategy(const std::string& name);
const char* strategy_name(ShardingStrategy s);

// Shard -> local-rank assignment, reused identically by every group.
struct ShardingPlan {
  std::vector<PlanEntry> entries;
  uint32_t ranks_per_group = 1;

  // Owning local rank for (table, row); throws if uncovered.
  uint32_t owner_of(uint32_t table_id, uint32_t row) const;
  std::vector<PlanEntry> entries_for_table(uint32_t table_id) const;
};

// table-wise: LPT greedy on expected lookups (largest load first into the
// least-loaded rank; ties by ascending table_id, then ascending rank).
// row-wise: every table split into N near-equal contiguous ranges, range j
// owned by local rank j.
ShardingPlan plan_greedy(std::span<const TableLoadProfile> profiles, uint32_t n,
                         ShardingStrategy strategy);

// Checks per-table coverage of [0, rows) with no overlap and local ranks
// within range. Throws on violation.
void validate_plan(const ShardingPlan& plan,
                   std::span<const TableLoadProfile> profiles);

// max / mean. Throws if the list is empty, contains a negative value, or
// sums to zero.
double imbalance_ratio(std::span<const double> per_rank_values);

inline constexpr double kSevereImbalanceThreshold = 2.0;
bool is_severe_imbalance(double ratio);
const char* imbalance_label(double ratio);  // "balanced" | "severe straggler"

// Expected lookups hitting rows [lo, hi) of the feature's table per batch:
// batch * ids_per_sample * Zipf mass of the range.
double expected_shard_lookups(const DataGenerator& gen, uint32_t feature,
                              uint32_t lo, uint32_t hi, uint32_t batch_size);

// Per-rank expected lookup loads implied by a plan (for imbalance reports).
std::vector<double> plan_rank_loads(const ShardingPlan& plan,
                                    std::span<const TableLoadProfile> profiles);

TableLoadProfile profile_from_spec(const FeatureSpec& spec, uint32_t dim,
                                   uint32_t batch_size);

}  // namespace sparse2d
