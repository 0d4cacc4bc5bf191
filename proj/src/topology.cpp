#include "sparse2d/topology.hpp"

#include <algorithm>
#include <stdexcept>

namespace sparse2d {

Topology::Topology(uint32_t total, uint32_t group_count)
    : total_ranks(total), groups(group_count) {
  if (total == 0) throw std::invalid_argument("total_ranks must be >= 1");
  if (group_count == 0) throw std::invalid_argument("groups must be >= 1");
  if (total % group_count != 0) {
    throw std::invalid_argument("groups (" + std::to_string(group_count) +
                                ") must divide total_ranks (" +
                                std::to_string(total) + ")");
  }
  ranks_per_group = total / group_count;
}

void BandwidthModel::validate() const {
  if (!(alpha_s > 0) || !(bw_inter > 0) || !(bw_intra > 0)) {
    throw std::invalid_argument("bandwidth model parameters must be positive");
  }
  if (bw_intra < bw_inter) {
    throw std::invalid_argument("bw_intra must be >= bw_inter");
  }
  if (ranks_per_host == 0) {
    throw std::invalid_argument("ranks_per_host must be >= 1");
  }
}

double BandwidthModel::bandwidth_for(std::span<const uint32_t> ranks) const {
  if (ranks.empty()) return bw_intra;
  const uint32_t host = host_of(ranks.front());
  for (uint32_t r : ranks) {
    if (host_of(r) != host) return bw_inter;
  }
  return bw_intra;
}

double BandwidthModel::sync_bandwidth(uint32_t groups) const {
  // Replica segments are host-aligned in the modeled deployment: with at
  // most one replica peer set per host the sync stays intra-host.
  return groups <= ranks_per_host ? bw_intra : bw_inter;
}

const char* kernel_name(KernelTag tag) {
  switch (tag) {
    case KernelTag::LookupA2A: return "lookup_a2a";
    case KernelTag::GradA2A: return "grad_a2a";
    case KernelTag::TableAllReduce: return "table_allreduce";
    case KernelTag::Compute: return "compute";
  }
  return "unknown";
}

AllToAllResult route_all_to_all(const Topology& topo, uint32_t group,
                                std::vector<std::vector<Blob>> payloads,
                                const BandwidthModel& bw, KernelTag kernel) {
  const uint32_t n = topo.ranks_per_group;
  if (group >= topo.groups) throw std::invalid_argument("group out of range");
  if (payloads.size() != n) {
    throw std::invalid_argument("payload matrix must be N x N (got " +
                                std::to_string(payloads.size()) + " rows, N=" +
                                std::to_string(n) + ")");
  }
  for (const auto& row : payloads) {
    if (row.size() != n) {
      throw std::invalid_argument("payload matrix must be N x N (row width " +
                                  std::to_string(row.size()) + ", N=" +
                                  std::to_string(n) + ")");
    }
  }

  AllToAllResult res;
  res.trace.kind = CollectiveKind::AllToAll;
  res.trace.kernel = kernel;
  res.trace.participants.resize(n);
  for (uint32_t l = 0; l < n; ++l) {
    res.trace.participants[l] = topo.rank_of(group, l);
  }

  res.trace.bytes_sent.assign(n, 0);
  res.trace.bytes_received.assign(n, 0);
  std::vector<uint64_t> wire_sent(n, 0), wire_recv(n, 0);
  for (uint32_t src = 0; src < n; ++src) {
    for (uint32_t dst = 0; dst < n; ++dst) {
      const uint64_t sz = payloads[src][dst].size();
      res.trace.bytes_sent[src] += sz;
      res.trace.bytes_received[dst] += sz;
      if (src != dst) {
        wire_sent[src] += sz;
        wire_recv[dst] += sz;
      }
    }
  }

  // Deliver: dst sees blobs indexed by ascending src.
  res.delivered.assign(n, std::vector<Blob>(n));
  for (uint32_t src = 0; src < n; ++src) {
    for (uint32_t dst = 0; dst < n; ++dst) {
      res.delivered[dst][src] = std::move(payloads[src][dst]);
    }
  }

  const double link_bw = bw.bandwidth_for(res.trace.participants);
  res.trace.rank_latency_s.resize(n);
  double worst = 0.0;
  for (uint32_t l = 0; l < n; ++l) {
    const uint64_t wire = std::max(wire_sent[l], wire_recv[l]);
    const double lat = bw.alpha_s * static_cast<double>(n - 1) +
                       static_cast<double>(wire) / link_bw;
    res.trace.rank_latency_s[l] = lat;
    worst = std::max(worst, lat);
  }
  res.trace.latency_s = worst;
  return res;
}

CollectiveTrace ring_allreduce_trace(const Topology& topo, uint32_t local_rank,
                                     size_t value_bytes,
                                     const BandwidthModel& bw,
                                     KernelTag kernel) {
  const uint32_t m = topo.groups;
  CollectiveTrace trace;
  trace.kind = CollectiveKind::AllReduce;
  trace.kernel = kernel;
  trace.participants.resize(m);
  for (uint32_t g = 0; g < m; ++g) {
    trace.participants[g] = topo.rank_of(g, local_rank);
  }
  // Ring all-reduce volume per rank: 2 * bytes * (M-1) / M.
  const uint64_t ring_bytes =
      m > 1 ? static_cast<uint64_t>(2.0 * static_cast<double>(value_bytes) *
                                    (m - 1) / m)
            : 0;
  trace.bytes_sent.assign(m, ring_bytes);
  trace.bytes_received.assign(m, ring_bytes);
  const double sync_bw = bw.sync_bandwidth(m);
  const double lat =
      m > 1 ? 2.0 * bw.alpha_s * (m - 1) +
                  2.0 * static_cast<double>(value_bytes) * (m - 1) /
                      (static_cast<double>(m) * sync_bw)
            : 0.0;
  trace.rank_latency_s.assign(m, lat);
  trace.latency_s = lat;
  return trace;
}

void deterministic_mean_inplace(std::span<float* const> replicas, size_t len) {
  const size_t m = replicas.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    for (size_t g = 0; g < m; ++g) {
      acc += static_cast<double>(replicas[g][i]);
    }
    const float mean = static_cast<float>(acc * inv_m);
    for (size_t g = 0; g < m; ++g) {
      replicas[g][i] = mean;
    }
  }
}

AllReduceResult all_reduce_mean_across_groups(
    const Topology& topo, uint32_t local_rank,
    std::span<const std::span<const float>> replicas, const BandwidthModel& bw,
    KernelTag kernel) {
  const uint32_t m = topo.groups;
  if (replicas.size() != m) {
    throw std::invalid_argument("need one replica per group");
  }
  if (local_rank >= topo.ranks_per_group) {
    throw std::invalid_argument("local_rank out of range");
  }
  const size_t len = replicas.empty() ? 0 : replicas[0].size();
  for (const auto& r : replicas) {
    if (r.size() != len) {
      throw std::invalid_argument("replica length mismatch: " +
                                  std::to_string(r.size()) + " vs " +
                                  std::to_string(len));
    }
  }

  AllReduceResult res;
  res.mean.resize(len);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t i = 0; i < len; ++i) {
    double acc = 0.0;  // ascending group order, 64-bit accumulation
    for (uint32_t g = 0; g < m; ++g) {
      acc += static_cast<double>(replicas[g][i]);
    }
    res.mean[i] = static_cast<float>(acc * inv_m);
  }
  res.trace = ring_allreduce_trace(topo, local_rank, len * sizeof(float), bw,
                                   kernel);
  return res;
}

CollectiveTrace all_reduce_mean_inplace(const Topology& topo,
                                        uint32_t local_rank,
                                        std::span<float* const> replicas,
                                        size_t len, const BandwidthModel& bw,
                                        KernelTag kernel) {
  const uint32_t m = topo.groups;
  if (replicas.size() != m) {
    throw std::invalid_argument("need one replica per group");
  }
  deterministic_mean_inplace(replicas, len);
  return ring_allreduce_trace(topo, local_rank, len * sizeof(float), bw,
                              kernel);
}

StepCostBreakdown simulate_step_latency(
    std::span<const CollectiveTrace> traces,
    std::span<const double> per_rank_compute_costs) {
  StepCostBreakdown out;
  for (const auto& t : traces) {
    double* slot = nullptr;
    switch (t.kernel) {
      case KernelTag::LookupA2A: slot = &out.lookup_a2a_s; break;
      case KernelTag::GradA2A: slot = &out.grad_a2a_s; break;
      case KernelTag::TableAllReduce: slot = &out.table_allreduce_s; break;
      case KernelTag::Compute: slot = &out.compute_s; break;
    }
    for (double lat : t.rank_latency_s) {
      *slot = std::max(*slot, lat);
    }
  }
  for (double c : per_rank_compute_costs) {
    out.compute_s = std::max(out.compute_s, c);
  }
  out.total_s =
      out.lookup_a2a_s + out.grad_a2a_s + out.table_allreduce_s + out.compute_s;
  return out;
}

}  // namespace sparse2d
