#pragma once

// Central finite-difference gradient check on a two-table desk model, shared
// by the unit suite and the acceptance suite. The loss oracle is a plain f64
// re-implementation of the forward pass, independent of the production code
// path; analytic gradients are read off one eta=1 SGD step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sparse2d/data.hpp"
#include "sparse2d/model.hpp"
#include "sparse2d/trainer.hpp"

namespace sparse2d::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  uint64_t sparse_checked = 0;
  uint64_t dense_checked = 0;
};

inline GradCheckResult run_desk_gradcheck() {
  TrainerOptions opts;
  opts.topo = Topology(2, 1);
  opts.model.num_tables = 2;
  opts.model.rows_per_table = 12;
  opts.model.dim = 4;
  opts.model.dense_hidden = 6;
  opts.model.over_hidden = 8;
  opts.data.dense_dim = 3;
  opts.zipf_exponent = 0.4;
  opts.ids_per_sample = 2;
  opts.per_rank_batch = 4;
  opts.steps = 1;
  opts.eval_samples = 16;
  opts.opt.variant = OptimizerVariant::Sgd;
  // One SGD step with a power-of-two eta: the weight delta is eta * g, so
  // g reads off exactly while the f32 rounding of the stored weight stays
  // negligible relative to the delta.
  opts.opt.eta = 64.0;
  opts.data_seed = 101;
  opts.init_seed = 102;
  opts.eval_seed = 103;

  DataGenerator gen(opts.feature_specs(), opts.data, opts.data_seed,
                    opts.eval_seed);
  std::vector<MiniBatch> batches;
  for (uint32_t r = 0; r < 2; ++r) {
    batches.push_back(gen.gen_batch(0, r, opts.per_rank_batch));
  }
  const uint32_t fd = opts.model.num_tables * opts.model.dim;

  auto loss_fn = [&](const std::vector<EmbeddingTable>& tabs, const Mlp& dense,
                     const Mlp& over) {
    double total = 0.0;
    uint64_t n = 0;
    for (const auto& mb : batches) {
      for (const auto& s : mb.samples) {
        std::vector<double> over_in(opts.model.over_in(), 0.0);
        for (uint32_t f = 0; f < opts.model.num_tables; ++f) {
          for (uint32_t id : s.ids[f]) {
            for (uint32_t j = 0; j < opts.model.dim; ++j) {
              over_in[f * opts.model.dim + j] +=
                  static_cast<double>(tabs[f].row(id)[j]);
            }
          }
        }
        std::vector<double> dh(opts.model.dense_hidden, 0.0);
        for (uint32_t h = 0; h < opts.model.dense_hidden; ++h) {
          double z = static_cast<double>(dense.b1[h]);
          for (uint32_t j = 0; j < opts.data.dense_dim; ++j) {
            z += static_cast<double>(dense.w1[h * opts.data.dense_dim + j]) *
                 static_cast<double>(s.dense[j]);
          }
          dh[h] = z > 0 ? z : 0.0;
        }
        for (uint32_t o = 0; o < opts.model.dim; ++o) {
          double z = static_cast<double>(dense.b2[o]);
          for (uint32_t h = 0; h < opts.model.dense_hidden; ++h) {
            z += static_cast<double>(dense.w2[o * opts.model.dense_hidden + h]) *
                 dh[h];
          }
          over_in[fd + o] = z;
        }
        std::vector<double> oh(opts.model.over_hidden, 0.0);
        for (uint32_t h = 0; h < opts.model.over_hidden; ++h) {
          double z = static_cast<double>(over.b1[h]);
          for (uint32_t j = 0; j < opts.model.over_in(); ++j) {
            z += static_cast<double>(over.w1[h * opts.model.over_in() + j]) *
                 over_in[j];
          }
          oh[h] = z > 0 ? z : 0.0;
        }
        double logit = static_cast<double>(over.b2[0]);
        for (uint32_t h = 0; h < opts.model.over_hidden; ++h) {
          logit += static_cast<double>(over.w2[h]) * oh[h];
        }
        const double p = 1.0 / (1.0 + std::exp(-logit));
        total += s.label > 0.5f ? -std::log(p) : -std::log(1.0 - p);
        ++n;
      }
    }
    return total / static_cast<double>(n);
  };

  Trainer trainer(opts);
  std::vector<EmbeddingTable> tabs0;
  for (const auto* t : trainer.tables()) tabs0.push_back(*t);
  const Mlp dense0 = trainer.rank_model(0).dense_arch;
  const Mlp over0 = trainer.rank_model(0).over_arch;
  trainer.step_n(1);

  auto tabs = tabs0;
  Mlp dense = dense0;
  Mlp over = over0;
  const double h = 1e-3;
  GradCheckResult res;

  auto check = [&](double analytic, float& slot, bool is_mlp) {
    const float saved = slot;
    slot = static_cast<float>(static_cast<double>(saved) + h);
    if (is_mlp) {
      dense.sync_mirror();
      over.sync_mirror();
    }
    const double up = loss_fn(tabs, dense, over);
    slot = static_cast<float>(static_cast<double>(saved) - h);
    if (is_mlp) {
      dense.sync_mirror();
      over.sync_mirror();
    }
    const double dn = loss_fn(tabs, dense, over);
    slot = saved;
    if (is_mlp) {
      dense.sync_mirror();
      over.sync_mirror();
    }
    const double fd_grad = (up - dn) / (2 * h);
    const double denom =
        std::max({std::abs(fd_grad), std::abs(analytic), 1e-4});
    res.max_rel_err =
        std::max(res.max_rel_err, std::abs(analytic - fd_grad) / denom);
  };

  const auto after = trainer.tables();
  for (uint32_t f = 0; f < opts.model.num_tables; ++f) {
    for (uint32_t row = 0; row < opts.model.rows_per_table; ++row) {
      for (uint32_t j = 0; j < opts.model.dim; ++j) {
        const double analytic = (static_cast<double>(tabs0[f].row(row)[j]) -
                                 static_cast<double>(after[f]->row(row)[j])) /
                                opts.opt.eta;
        if (analytic == 0.0) continue;  // untouched row
        check(analytic, tabs[f].row(row)[j], false);
        ++res.sparse_checked;
      }
    }
  }

  const Mlp& dense_after = trainer.rank_model(0).dense_arch;
  const Mlp& over_after = trainer.rank_model(0).over_arch;
  auto check_mlp = [&](const std::vector<float>& before,
                       const std::vector<float>& now, std::vector<float>& slot,
                       size_t stride) {
    for (size_t i = 0; i < before.size(); i += stride) {
      check((static_cast<double>(before[i]) - static_cast<double>(now[i])) /
                opts.opt.eta,
            slot[i], true);
      ++res.dense_checked;
    }
  };
  check_mlp(dense0.w1, dense_after.w1, dense.w1, 2);
  check_mlp(dense0.w2, dense_after.w2, dense.w2, 3);
  check_mlp(dense0.b1, dense_after.b1, dense.b1, 1);
  check_mlp(over0.w1, over_after.w1, over.w1, 13);
  check_mlp(over0.w2, over_after.w2, over.w2, 2);
  check_mlp(over0.b2, over_after.b2, over.b2, 1);
  return res;
}

}  // namespace sparse2d::testing
