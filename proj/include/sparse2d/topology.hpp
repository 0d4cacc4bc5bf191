#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparse2d {

// T ranks split into M groups of N = T/M ranks.
// rank r -> (group = r / N, local_rank = r % N).
struct Topology {
  uint32_t total_ranks = 1;
  uint32_t groups = 1;
  uint32_t ranks_per_group = 1;

  Topology() = default;
  Topology(uint32_t total, uint32_t group_count);

  uint32_t group_of(uint32_t rank) const { return rank / ranks_per_group; }
  uint32_t local_of(uint32_t rank) const { return rank % ranks_per_group; }
  uint32_t rank_of(uint32_t group, uint32_t local) const {
    return group * ranks_per_group + local;
  }
};

// Alpha-beta link model. Intra-host links default to 7x the inter-host
// bandwidth.
struct BandwidthModel {
  double alpha_s = 2e-6;            // per-hop fixed latency
  double bw_inter = 25e9;           // bytes/s across hosts
  double bw_intra = 7.0 * 25e9;     // bytes/s within a host
  uint32_t ranks_per_host = 8;

  void validate() const;
  uint32_t host_of(uint32_t rank) const { return rank / ranks_per_host; }

  // Bandwidth applicable to a set of participating global ranks.
  double bandwidth_for(std::span<const uint32_t> ranks) const;
  // Bandwidth used for cross-group sync with M participating replicas
  // (host-aligned replica placement assumed, per the deployment layout).
  double sync_bandwidth(uint32_t groups) const;
};

enum class CollectiveKind { AllToAll, AllReduce };

// Role of a collective inside one training step.
enum class KernelTag { LookupA2A, GradA2A, TableAllReduce, Compute };

const char* kernel_name(KernelTag tag);

struct CollectiveTrace {
  CollectiveKind kind = CollectiveKind::AllToAll;
  KernelTag kernel = KernelTag::LookupA2A;
  std::vector<uint32_t> participants;    // global ranks
  std::vector<uint64_t> bytes_sent;      // routed bytes, self included
  std::vector<uint64_t> bytes_received;
  std::vector<double> rank_latency_s;    // per participant
  double latency_s = 0.0;                // collective = max over participants
};

using Blob = std::vector<std::byte>;

struct AllToAllResult {
  // delivered[dst][src]: blob sent by local rank src to local rank dst.
  std::vector<std::vector<Blob>> delivered;
  CollectiveTrace trace;
};

// In-memory all-to-all confined to one group. payloads[src][dst] must be an
// N x N matrix; dst receives blobs in ascending src order. Latency follows
// alpha*(N-1) + max-per-rank wire bytes / bandwidth; self-delivery is free.
AllToAllResult route_all_to_all(const Topology& topo, uint32_t group,
                                std::vector<std::vector<Blob>> payloads,
                                const BandwidthModel& bw,
                                KernelTag kernel = KernelTag::LookupA2A);

struct AllReduceResult {
  std::vector<float> mean;
  CollectiveTrace trace;
};

// Element-wise mean across the M replicas of one local rank's state.
// Summation runs in ascending group order with 64-bit accumulation, so the
// result is bit-deterministic. Latency follows the ring estimate
// 2*alpha*(M-1) + 2*bytes*(M-1)/(M*bw).
AllReduceResult all_reduce_mean_across_groups(
    const Topology& topo, uint32_t local_rank,
    std::span<const std::span<const float>> replicas, const BandwidthModel& bw,
    KernelTag kernel = KernelTag::TableAllReduce);

// In-place variant: every replica is overwritten with the mean.
CollectiveTrace all_reduce_mean_inplace(const Topology& topo,
                                        uint32_t local_rank,
                                        std::span<float* const> replicas,
                                        size_t len, const BandwidthModel& bw,
                                        KernelTag kernel);

// Canonical element-wise mean (ascending participant order, f64 accumulation)
// shared by the all-reduce paths. Mean of identical replicas reproduces the
// input bitwise.
void deterministic_mean_inplace(std::span<float* const> replicas, size_t len);

// Ring all-reduce accounting for `value_bytes` of per-replica state across
// the M peers of one local rank.
CollectiveTrace ring_allreduce_trace(const Topology& topo, uint32_t local_rank,
                                     size_t value_bytes,
                                     const BandwidthModel& bw,
                                     KernelTag kernel);

struct StepCostBreakdown {
  double lookup_a2a_s = 0.0;
  double grad_a2a_s = 0.0;
  double table_allreduce_s = 0.0;
  double compute_s = 0.0;
  double total_s = 0.0;  // serial kernel model: sum of per-kernel maxima
};

// Max-over-ranks cost per kernel for the traces of one step, plus the given
// per-rank compute costs.
StepCostBreakdown simulate_step_latency(
    std::span<const CollectiveTrace> traces,
    std::span<const double> per_rank_compute_costs);

}  // namespace sparse2d
