#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparse2d {

enum class OptimizerVariant { RowWiseAdagrad, Sgd };

OptimizerVariant parse_optimizer_variant(const std::string& name);
const char* optimizer_variant_name(OptimizerVariant v);

struct OptimizerConfig {
  double eta = 0.05;    // base learning rate
  double eps = 1e-8;    // stability constant
  double c = 1.0;       // moment scaling factor; c = 1 is standard AdaGrad
  OptimizerVariant variant = OptimizerVariant::RowWiseAdagrad;

  void validate() const;
};

// Group-level gradient of one row: mean over the group batch of the
// per-sample contributions that touched the row.
struct RowGradient {
  uint32_t row = 0;
  std::vector<double> g;
  uint32_t sample_count = 0;  // contributing samples in the group
};

// One per-sample contribution to a row, in canonical arrival order
// (ascending requester local rank, sample, feature, occurrence).
struct RowGradContribution {
  uint32_t row = 0;
  std::span<const double> grad;
};

// g_row = (1 / group_batch_size) * sum of contributions, accumulated in
// arrival order per row; output sorted by ascending row. Rows with no
// contribution yield no entry. Throws on zero group batch.
std::vector<RowGradient> aggregate_group_gradient(
    std::span<const RowGradContribution> contributions,
    uint32_t group_batch_size, uint32_t dim);

// eta / (sqrt(v / c) + eps).
double effective_lr(double v, const OptimizerConfig& cfg);

// Fused row step: v' = v + |g|^2 ; w' = w - effective_lr(v') * g.
// Mutates w and v in place; returns the effective learning rate used.
// Throws on nonfinite gradient.
double adagrad_row_step(std::span<float> w, float& v,
                        std::span<const double> g, const OptimizerConfig& cfg);

// w' = w - eta * g.
void sgd_row_step(std::span<float> w, std::span<const double> g,
                  const OptimizerConfig& cfg);

}  // namespace sparse2d
