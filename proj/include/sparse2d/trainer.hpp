#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparse2d/data.hpp"
#include "sparse2d/embedding.hpp"
#include "sparse2d/model.hpp"
#include "sparse2d/optimizer.hpp"
#include "sparse2d/planner.hpp"
#include "sparse2d/topology.hpp"

namespace sparse2d {

// Raised when training produces a nonfinite loss; the CLI maps it to its own
// exit code.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NEReport {
  double ne = 0.0;
  double baseline_ctr = 0.0;    // mean label of the eval set
  uint64_t eval_samples = 0;
  // Relative gap in percent vs a baseline run; positive = worse. NaN until a
  // baseline is attached.
  double ne_gap_vs_baseline = std::numeric_limits<double>::quiet_NaN();
};

// ne = mean logistic log-loss / entropy of the constant mean-CTR predictor.
// Throws if the eval set is empty or all labels are identical.
NEReport evaluate_ne(std::span<const double> probs,
                     std::span<const float> labels);

double ne_gap_percent(double ne, double ne_baseline);

// Threshold (percent) above which an NE gap is considered significant.
inline constexpr double kNeSignificancePct = 0.02;

struct TrainerOptions {
  Topology topo;
  DlrmConfig model;
  DataParams data;
  OptimizerConfig opt;
  BandwidthModel bw;
  ShardingStrategy strategy = ShardingStrategy::RowWise;
  double zipf_exponent = 1.0;
  uint32_t ids_per_sample = 2;
  uint32_t per_rank_batch = 4;
  uint64_t steps = 1000;
  uint32_t sync_interval = 1;
  uint64_t eval_cadence = 0;   // 0 = evaluate only after the final step
  uint32_t eval_samples = 100000;
  uint64_t data_seed = 1;
  uint64_t init_seed = 2;
  uint64_t eval_seed = 3;
  uint32_t threads = 1;
  bool collect_traces = false;
  double compute_flops_per_s = 2e12;

  void validate() const;
  std::vector<FeatureSpec> feature_specs() const;
};

struct MetricsRow {
  uint64_t step = 0;   // 1-based step index the row was emitted after
  double loss = 0.0;   // global-batch mean training loss of that step
  double ne = 0.0;
  double eff_lr_p50 = 0.0;
  double eff_lr_p99 = 0.0;
  double v_mean = 0.0;
};

struct KernelTraffic {
  uint64_t bytes_sent = 0;
  uint64_t bytes_received = 0;
};

struct SteppedTrace {
  uint64_t step = 0;
  CollectiveTrace trace;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  NEReport final_ne;
  // Cumulative routed bytes per global rank, one slot per KernelTag value.
  std::array<std::vector<KernelTraffic>, 3> traffic;
  StepCostBreakdown mean_step_cost;
  double qps_sim = 0.0;          // global batch / mean simulated step latency
  uint64_t peak_mem_bytes = 0;   // max simulated per-rank footprint
  std::vector<SteppedTrace> traces;  // populated when collect_traces
};

// Single-process executor of the hierarchical training loop: per-group
// lookup/grad all-to-alls, fused row-wise updates, cross-group weight and
// moment mean-sync. Any worker-thread count produces bitwise-identical
// results (virtual ranks only share state at fixed sequential merge points).
class Trainer {
 public:
  explicit Trainer(TrainerOptions opts);
  ~Trainer();

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  TrainResult run();

  // Incremental interface: advance some steps, then settle the result.
  void step_n(uint64_t count);
  TrainResult finalize();

  // Consensus view of the embedding state (replica of group 0).
  std::vector<const EmbeddingTable*> tables() const;
  std::vector<const EmbeddingTable*> replica_tables(uint32_t group) const;
  const ShardingPlan& plan() const;
  const RankModel& rank_model(uint32_t rank) const;

  void save_tables(const std::string& path) const;
  void load_tables(const std::string& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sparse2d
