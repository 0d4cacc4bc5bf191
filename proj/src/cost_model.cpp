#include "sparse2d/cost_model.hpp"

#include <stdexcept>
#include <string>

namespace sparse2d {

void ClusterSpec::validate() const {
  if (total_gpus == 0) throw std::invalid_argument("total_gpus must be >= 1");
  if (groups == 0) throw std::invalid_argument("groups must be >= 1");
  if (total_gpus % groups != 0) {
    throw std::invalid_argument("groups must divide total_gpus (" +
                                std::to_string(groups) + " vs " +
                                std::to_string(total_gpus) + ")");
  }
  if (!(table_size_gb > 0)) {
    throw std::invalid_argument("table_size_gb must be > 0");
  }
  if (!(sync_bw_gbps > 0)) {
    throw std::invalid_argument("sync_bw_gbps must be > 0");
  }
}

double memory_overhead(double table_size_gb, uint32_t groups,
                       uint32_t total_gpus) {
  return table_size_gb * static_cast<double>(groups - 1) /
         static_cast<double>(total_gpus);
}

double sync_latency(double table_size_gb, uint32_t groups, uint32_t total_gpus,
                    double sync_bw_gbps) {
  return 2.0 * memory_overhead(table_size_gb, groups, total_gpus) /
         sync_bw_gbps;
}

CostEstimate estimate_cost(const ClusterSpec& spec) {
  spec.validate();
  CostEstimate est;
  est.mem_overhead_gb =
      memory_overhead(spec.table_size_gb, spec.groups, spec.total_gpus);
  est.sync_latency_s = sync_latency(spec.table_size_gb, spec.groups,
                                    spec.total_gpus, spec.sync_bw_gbps);
  return est;
}

double qps_scaling_factor(double qps_base, double gpus_base, double qps_new,
                          double gpus_new) {
  if (!(qps_base > 0) || !(gpus_base > 0) || !(qps_new > 0)) {
    throw std::invalid_argument("QPS and GPU counts must be positive");
  }
  if (!(gpus_new > gpus_base)) {
    throw std::invalid_argument("gpus_new must exceed gpus_base");
  }
  return (qps_new / qps_base) / (gpus_new / gpus_base);
}

}  // namespace sparse2d
