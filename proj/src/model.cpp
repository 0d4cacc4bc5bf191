#include "sparse2d/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sparse2d/rng.hpp"

namespace sparse2d {

double dot_f64(const double* w, const double* x, uint32_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  uint32_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += w[i] * x[i];
    a1 += w[i + 1] * x[i + 1];
    a2 += w[i + 2] * x[i + 2];
    a3 += w[i + 3] * x[i + 3];
  }
  for (; i < n; ++i) {
    a0 += w[i] * x[i];
  }
  return (a0 + a1) + (a2 + a3);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void MlpGrads::resize(const MlpDims& d) {
  w1.assign(static_cast<size_t>(d.hidden) * d.in, 0.0);
  b1.assign(d.hidden, 0.0);
  w2.assign(static_cast<size_t>(d.out) * d.hidden, 0.0);
  b2.assign(d.out, 0.0);
}

void MlpGrads::reset() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

Mlp::Mlp(MlpDims dims) : dims_(dims) {
  w1.assign(static_cast<size_t>(dims.hidden) * dims.in, 0.0f);
  b1.assign(dims.hidden, 0.0f);
  w2.assign(static_cast<size_t>(dims.out) * dims.hidden, 0.0f);
  b2.assign(dims.out, 0.0f);
  sync_mirror();
}

Mlp::Mlp(MlpDims dims, uint64_t seed, uint64_t tag) : dims_(dims) {
  w1.resize(static_cast<size_t>(dims.hidden) * dims.in);
  b1.assign(dims.hidden, 0.0f);
  w2.resize(static_cast<size_t>(dims.out) * dims.hidden);
  b2.assign(dims.out, 0.0f);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(dims.in));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  CounterRng rng({seed, tag});
  for (auto& w : w1) {
    w = static_cast<float>(rng.next_uniform_range(-bound1, bound1));
  }
  for (auto& w : w2) {
    w = static_cast<float>(rng.next_uniform_range(-bound2, bound2));
  }
  sync_mirror();
}

void Mlp::sync_mirror() {
  w1_d.resize(w1.size());
  for (size_t i = 0; i < w1.size(); ++i) {
    w1_d[i] = static_cast<double>(w1[i]);
  }
  w2_d.resize(w2.size());
  for (size_t i = 0; i < w2.size(); ++i) {
    w2_d[i] = static_cast<double>(w2[i]);
  }
}

void Mlp::copy_params_from(const Mlp& other) {
  w1 = other.w1;
  b1 = other.b1;
  w2 = other.w2;
  b2 = other.b2;
  w1_d = other.w1_d;
  w2_d = other.w2_d;
}

namespace {
thread_local std::vector<double> t_x64;
thread_local std::vector<double> t_h64;
}  // namespace

void Mlp::forward(const float* x, float* hidden, float* out) const {
  t_x64.resize(dims_.in);
  t_h64.resize(dims_.hidden);
  double* const xd = t_x64.data();
  double* const hd = t_h64.data();
  for (uint32_t j = 0; j < dims_.in; ++j) {
    xd[j] = static_cast<double>(x[j]);
  }
  for (uint32_t h = 0; h < dims_.hidden; ++h) {
    const double z =
        static_cast<double>(b1[h]) +
        dot_f64(&w1_d[static_cast<size_t>(h) * dims_.in], xd, dims_.in);
    const float zh = z > 0.0 ? static_cast<float>(z) : 0.0f;
    hidden[h] = zh;
    hd[h] = static_cast<double>(zh);
  }
  for (uint32_t o = 0; o < dims_.out; ++o) {
    const double z =
        static_cast<double>(b2[o]) +
        dot_f64(&w2_d[static_cast<size_t>(o) * dims_.hidden], hd,
                dims_.hidden);
    out[o] = static_cast<float>(z);
  }
}

void Mlp::backward_dx(const float* hidden, const double* dout, double* dhidden,
                      double* dx) const {
  for (uint32_t h = 0; h < dims_.hidden; ++h) dhidden[h] = 0.0;
  for (uint32_t o = 0; o < dims_.out; ++o) {
    const double d = dout[o];
    const double* w_row = &w2_d[static_cast<size_t>(o) * dims_.hidden];
    for (uint32_t h = 0; h < dims_.hidden; ++h) {
      dhidden[h] += d * w_row[h];
    }
  }
  for (uint32_t h = 0; h < dims_.hidden; ++h) {
    if (hidden[h] <= 0.0f) dhidden[h] = 0.0;
  }
  if (dx) {
    for (uint32_t j = 0; j < dims_.in; ++j) dx[j] = 0.0;
    for (uint32_t h = 0; h < dims_.hidden; ++h) {
      const double d = dhidden[h];
      if (d == 0.0) continue;
      const double* w_row = &w1_d[static_cast<size_t>(h) * dims_.in];
      for (uint32_t j = 0; j < dims_.in; ++j) {
        dx[j] += d * w_row[j];
      }
    }
  }
}

void Mlp::accumulate_grads(const float* x, const float* hidden,
                           const double* dout, const double* dhidden,
                           MlpGrads& g) const {
  for (uint32_t o = 0; o < dims_.out; ++o) {
    const double d = dout[o];
    double* gw = &g.w2[static_cast<size_t>(o) * dims_.hidden];
    for (uint32_t h = 0; h < dims_.hidden; ++h) {
      gw[h] += d * static_cast<double>(hidden[h]);
    }
    g.b2[o] += d;
  }
  t_x64.resize(dims_.in);
  double* const xd = t_x64.data();
  for (uint32_t j = 0; j < dims_.in; ++j) {
    xd[j] = static_cast<double>(x[j]);
  }
  for (uint32_t h = 0; h < dims_.hidden; ++h) {
    const double d = dhidden[h];
    if (d == 0.0) continue;
    double* gw = &g.w1[static_cast<size_t>(h) * dims_.in];
    for (uint32_t j = 0; j < dims_.in; ++j) {
      gw[j] += d * xd[j];
    }
    g.b1[h] += d;
  }
}

void Mlp::apply_sgd(const MlpGrads& g, double lr, double scale) {
  const double f = lr * scale;
  for (size_t i = 0; i < w1.size(); ++i) {
    w1[i] = static_cast<float>(static_cast<double>(w1[i]) - f * g.w1[i]);
  }
  for (size_t i = 0; i < b1.size(); ++i) {
    b1[i] = static_cast<float>(static_cast<double>(b1[i]) - f * g.b1[i]);
  }
  for (size_t i = 0; i < w2.size(); ++i) {
    w2[i] = static_cast<float>(static_cast<double>(w2[i]) - f * g.w2[i]);
  }
  for (size_t i = 0; i < b2.size(); ++i) {
    b2[i] = static_cast<float>(static_cast<double>(b2[i]) - f * g.b2[i]);
  }
  sync_mirror();
}

void DlrmConfig::validate() const {
  if (num_tables == 0 || rows_per_table == 0 || dim == 0 ||
      dense_hidden == 0 || over_hidden == 0) {
    throw std::invalid_argument("model dimensions must all be >= 1");
  }
}

RankModel init_rank_model(const DlrmConfig& cfg, uint32_t dense_dim,
                          uint64_t init_seed) {
  RankModel m;
  m.dense_arch = Mlp({dense_dim, cfg.dense_hidden, cfg.dim}, init_seed, 101);
  m.over_arch = Mlp({cfg.over_in(), cfg.over_hidden, 1}, init_seed, 102);
  return m;
}

double model_flops_per_sample(const DlrmConfig& cfg, uint32_t dense_dim) {
  const double dense = static_cast<double>(dense_dim) * cfg.dense_hidden +
                       static_cast<double>(cfg.dense_hidden) * cfg.dim;
  const double over = static_cast<double>(cfg.over_in()) * cfg.over_hidden +
                      static_cast<double>(cfg.over_hidden);
  // forward + ~2x for backward, two flops per multiply-accumulate
  return 2.0 * 3.0 * (dense + over);
}

}  // namespace sparse2d
