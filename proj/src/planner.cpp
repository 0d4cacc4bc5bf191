#include "sparse2d/planner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace sparse2d {

ShardingStrategy parse_strategy(const std::string& name) {
  if (name == "table-wise") return ShardingStrategy::TableWise;
  if (name == "row-wise") return ShardingStrategy::RowWise;
  throw std::invalid_argument("unknown sharding strategy: " + name);
}

const char* strategy_name(ShardingStrategy s) {
  return s == ShardingStrategy::TableWise ? "table-wise" : "row-wise";
}

uint32_t ShardingPlan::owner_of(uint32_t table_id, uint32_t row) const {
  for (const auto& e : entries) {
    if (e.table_id == table_id && row >= e.row_lo && row < e.row_hi) {
      return e.local_rank;
    }
  }
  throw std::out_of_range("row " + std::to_string(row) + " of table " +
                          std::to_string(table_id) + " not covered by plan");
}

std::vector<PlanEntry> ShardingPlan::entries_for_table(uint32_t table_id) const {
  std::vector<PlanEntry> out;
  for (const auto& e : entries) {
    if (e.table_id == table_id) out.push_back(e);
  }
  return out;
}

ShardingPlan plan_greedy(std::span<const TableLoadProfile> profiles, uint32_t n,
                         ShardingStrategy strategy) {
  if (n < 1) throw std::invalid_argument("ranks per group must be >= 1");
  if (profiles.empty()) throw std::invalid_argument("no table profiles");

  ShardingPlan plan;
  plan.ranks_per_group = n;

  if (strategy == ShardingStrategy::RowWise) {
    for (const auto& p : profiles) {
      const uint64_t rows = p.num_rows;
      for (uint32_t j = 0; j < n; ++j) {
        const uint32_t lo = static_cast<uint32_t>(rows * j / n);
        const uint32_t hi = static_cast<uint32_t>(rows * (j + 1) / n);
        if (hi > lo) {
          plan.entries.push_back({p.table_id, lo, hi, j});
        }
      }
    }
  } else {
    // LPT: heaviest table first into the least-loaded rank. Ties are broken
    // by ascending table_id (sort) and ascending rank (scan), so the plan is
    // a total function of its inputs.
    std::vector<const TableLoadProfile*> order;
    order.reserve(profiles.size());
    for (const auto& p : profiles) order.push_back(&p);
    std::sort(order.begin(), order.end(),
              [](const TableLoadProfile* a, const TableLoadProfile* b) {
                if (a->expected_lookups_per_batch !=
                    b->expected_lookups_per_batch) {
                  return a->expected_lookups_per_batch >
                         b->expected_lookups_per_batch;
                }
                return a->table_id < b->table_id;
              });
    std::vector<double> load(n, 0.0);
    for (const auto* p : order) {
      uint32_t best = 0;
      for (uint32_t r = 1; r < n; ++r) {
        if (load[r] < load[best]) best = r;
      }
      load[best] += p->expected_lookups_per_batch;
      plan.entries.push_back(
          {p->table_id, 0, static_cast<uint32_t>(p->num_rows), best});
    }
    std::sort(plan.entries.begin(), plan.entries.end(),
              [](const PlanEntry& a, const PlanEntry& b) {
                return a.table_id < b.table_id;
              });
  }
  return plan;
}

void validate_plan(const ShardingPlan& plan,
                   std::span<const TableLoadProfile> profiles) {
  for (const auto& e : plan.entries) {
    if (e.local_rank >= plan.ranks_per_group) {
      throw std::invalid_argument("plan entry names local rank " +
                                  std::to_string(e.local_rank) +
                                  " >= N=" +
                                  std::to_string(plan.ranks_per_group));
    }
  }
  for (const auto& p : profiles) {
    auto entries = plan.entries_for_table(p.table_id);
    std::sort(entries.begin(), entries.end(),
              [](const PlanEntry& a, const PlanEntry& b) {
                return a.row_lo < b.row_lo;
              });
    uint32_t expect = 0;
    for (const auto& e : entries) {
      if (e.row_lo != expect) {
        throw std::invalid_argument(
            "table " + std::to_string(p.table_id) + " rows [" +
            std::to_string(expect) + "," + std::to_string(e.row_lo) +
            ") uncovered or overlapping");
      }
      expect = e.row_hi;
    }
    if (expect != p.num_rows) {
      throw std::invalid_argument("table " + std::to_string(p.table_id) +
                                  " covered to row " + std::to_string(expect) +
                                  " of " + std::to_string(p.num_rows));
    }
  }
}

double imbalance_ratio(std::span<const double> per_rank_values) {
  if (per_rank_values.empty()) {
    throw std::invalid_argument("imbalance_ratio over empty list");
  }
  double sum = 0.0;
  double mx = 0.0;
  for (double v : per_rank_values) {
    if (v < 0.0) {
      throw std::invalid_argument("imbalance_ratio needs nonnegative values");
    }
    sum += v;
    mx = std::max(mx, v);
  }
  if (sum == 0.0) {
    throw std::invalid_argument("imbalance_ratio undefined for all-zero loads");
  }
  const double mean = sum / static_cast<double>(per_rank_values.size());
  return mx / mean;
}

bool is_severe_imbalance(double ratio) {
  return ratio > kSevereImbalanceThreshold;
}

const char* imbalance_label(double ratio) {
  return is_severe_imbalance(ratio) ? "severe straggler" : "balanced";
}

double expected_shard_lookups(const DataGenerator& gen, uint32_t feature,
                              uint32_t lo, uint32_t hi, uint32_t batch_size) {
  const auto& spec = gen.specs().at(feature);
  const double mass = gen.zipf_cdf(feature, hi) - gen.zipf_cdf(feature, lo);
  return mass * static_cast<double>(spec.ids_per_sample) *
         static_cast<double>(batch_size);
}

std::vector<double> plan_rank_loads(
    const ShardingPlan& plan, std::span<const TableLoadProfile> profiles) {
  std::map<uint32_t, const TableLoadProfile*> by_id;
  for (const auto& p : profiles) by_id[p.table_id] = &p;
  std::vector<double> loads(plan.ranks_per_group, 0.0);
  for (const auto& e : plan.entries) {
    auto it = by_id.find(e.table_id);
    if (it == by_id.end()) continue;
    const auto* p = it->second;
    // Manifest-level profiles carry no intra-table skew; a row range is
    // credited its proportional share of the table load.
    const double frac =
        p->num_rows ? static_cast<double>(e.row_hi - e.row_lo) /
                          static_cast<double>(p->num_rows)
                    : 0.0;
    loads[e.local_rank] += p->expected_lookups_per_batch * frac;
  }
  return loads;
}

TableLoadProfile profile_from_spec(const FeatureSpec& spec, uint32_t dim,
                                   uint32_t batch_size) {
  TableLoadProfile p;
  p.table_id = spec.table_id;
  p.num_rows = spec.num_ids;
  p.size_bytes = static_cast<uint64_t>(spec.num_ids) * dim * sizeof(float);
  p.expected_lookups_per_batch =
      static_cast<double>(spec.ids_per_sample) * batch_size;
  return p;
}

}  // namespace sparse2d
