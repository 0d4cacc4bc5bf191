#include "sparse2d/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparse2d {

OptimizerVariant parse_optimizer_variant(const std::string& name) {
  if (name == "rowwise-adagrad") return OptimizerVariant::RowWiseAdagrad;
  if (name == "sgd") return OptimizerVariant::Sgd;
  throw std::invalid_argument("unknown optimizer variant: " + name);
}

const char* optimizer_variant_name(OptimizerVariant v) {
  return v == OptimizerVariant::RowWiseAdagrad ? "rowwise-adagrad" : "sgd";
}

void OptimizerConfig::validate() const {
  if (!(eta > 0)) throw std::invalid_argument("optimizer.eta must be > 0");
  if (!(eps > 0)) throw std::invalid_argument("optimizer.eps must be > 0");
  if (!(c > 0)) throw std::invalid_argument("optimizer.c must be > 0");
}

std::vector<RowGradient> aggregate_group_gradient(
    std::span<const RowGradContribution> contributions,
    uint32_t group_batch_size, uint32_t dim) {
  if (group_batch_size == 0) {
    throw std::invalid_argument("group batch size must be > 0");
  }
  // Stable sort keeps per-row accumulation in arrival order.
  std::vector<uint32_t> order(contributions.size());
  for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return contributions[a].row < contributions[b].row;
  });

  std::vector<RowGradient> out;
  const double inv_batch = 1.0 / static_cast<double>(group_batch_size);
  size_t i = 0;
  while (i < order.size()) {
    const uint32_t row = contributions[order[i]].row;
    RowGradient rg;
    rg.row = row;
    rg.g.assign(dim, 0.0);
    while (i < order.size() && contributions[order[i]].row == row) {
      const auto& c = contributions[order[i]];
      if (c.grad.size() != dim) {
        throw std::invalid_argument("gradient dim mismatch");
      }
      for (uint32_t j = 0; j < dim; ++j) rg.g[j] += c.grad[j];
      ++rg.sample_count;
      ++i;
    }
    for (uint32_t j = 0; j < dim; ++j) rg.g[j] *= inv_batch;
    out.push_back(std::move(rg));
  }
  return out;
}

double effective_lr(double v, const OptimizerConfig& cfg) {
  return cfg.eta / (std::sqrt(v / cfg.c) + cfg.eps);
}

double adagrad_row_step(std::span<float> w, float& v,
                        std::span<const double> g,
                        const OptimizerConfig& cfg) {
  double norm_sq = 0.0;
  for (double gj : g) {
    if (!std::isfinite(gj)) {
      throw std::invalid_argument("nonfinite row gradient");
    }
    norm_sq += gj * gj;
  }
  const float v_new =
      static_cast<float>(static_cast<double>(v) + norm_sq);
  v = v_new;
  const double lr = effective_lr(static_cast<double>(v_new), cfg);
  for (size_t j = 0; j < w.size(); ++j) {
    w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * g[j]);
  }
  return lr;
}

void sgd_row_step(std::span<float> w, std::span<const double> g,
                  const OptimizerConfig& cfg) {
  for (size_t j = 0; j < w.size(); ++j) {
    w[j] = static_cast<float>(static_cast<double>(w[j]) - cfg.eta * g[j]);
  }
}

}  // namespace sparse2d
