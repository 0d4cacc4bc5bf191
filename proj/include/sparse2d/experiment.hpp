#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparse2d/config.hpp"
#include "sparse2d/trainer.hpp"

namespace sparse2d {

// Recognized sweep axes and their dotted config keys.
std::optional<std::string> sweep_axis_key(const std::string& axis);

struct RunArtifact {
  TrainResult result;
  std::string config_hash;
  std::string metrics_csv;   // serialized artifact bodies
  std::string trace_csv;     // empty unless traces were collected
};

// Executes `train` for one resolved config and serializes its artifacts.
RunArtifact run_train(const ExperimentConfig& cfg);

std::string metrics_to_csv(const TrainResult& r, const std::string& cfg_hash);
std::string traces_to_csv(const TrainResult& r, const std::string& cfg_hash);

struct SweepPointResult {
  std::string value;
  double final_ne = 0.0;
  double ne_gap_vs_m1_pct = 0.0;
  double qps_sim = 0.0;
  uint64_t peak_mem_bytes = 0;
  double imbalance_ratio = 1.0;
  std::vector<RunArtifact> per_seed;  // one per requested seed
};

struct SweepResult {
  std::vector<SweepPointResult> points;
  std::string comparison_csv;
};

// Runs the axis sweep plus the shared M=1/c=1 baseline; per-point metrics are
// averaged over the given master seeds. Gaps use the same-seed baseline.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<uint64_t>& seeds);

}  // namespace sparse2d
