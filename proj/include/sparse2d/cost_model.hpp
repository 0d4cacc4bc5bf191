#pragma once

#include <cstdint>

namespace sparse2d {

struct ClusterSpec {
  uint32_t total_gpus = 1;   // T
  uint32_t groups = 1;       // M
  double table_size_gb = 0;  // S
  double sync_bw_gbps = 1;   // B_sync, GB/s

  void validate() const;
};

struct CostEstimate {
  double mem_overhead_gb = 0.0;
  double sync_latency_s = 0.0;
};

// Per-GPU table replication overhead: S * (M - 1) / T, in GB.
double memory_overhead(double table_size_gb, uint32_t groups,
                       uint32_t total_gpus);

// Ring-sync latency per rank: 2 * memory_overhead / B_sync. Computed through
// memory_overhead so the identity holds bitwise. The alpha latency term is
// deliberately excluded here; the collective model carries it.
double sync_latency(double table_size_gb, uint32_t groups, uint32_t total_gpus,
                    double sync_bw_gbps);

CostEstimate estimate_cost(const ClusterSpec& spec);

// (qps_new / qps_base) / (gpus_new / gpus_base); 1.0 = linear scaling.
double qps_scaling_factor(double qps_base, double gpus_base, double qps_new,
                          double gpus_new);

}  // namespace sparse2d
