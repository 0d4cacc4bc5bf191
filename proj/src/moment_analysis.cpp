#include "sparse2d/moment_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sparse2d/rng.hpp"

namespace sparse2d {

void GradientNoiseModel::validate() const {
  if (dim == 0) throw std::invalid_argument("dim must be >= 1");
  if (mu.size() != dim) throw std::invalid_argument("mu size must equal dim");
  if (!(sigma >= 0)) throw std::invalid_argument("sigma must be >= 0");
  if (per_group_batch == 0) throw std::invalid_argument("batch must be >= 1");
}

double GradientNoiseModel::mu_norm_sq() const {
  double s = 0.0;
  for (double m : mu) s += m * m;
  return s;
}

GradientNoiseModel make_noise_model(double mu_norm, double sigma, uint32_t dim,
                                    uint32_t per_group_batch) {
  GradientNoiseModel m;
  m.dim = dim;
  m.sigma = sigma;
  m.per_group_batch = per_group_batch;
  m.mu.assign(dim, 0.0);
  if (dim > 0) m.mu[0] = mu_norm;  // direction is irrelevant to the norms
  m.validate();
  return m;
}

namespace {

double norm_sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Fixed binary-tree element-wise mean of M vectors (in place, pairs combined
// bottom-up in ascending order). With identical inputs and power-of-two M
// every intermediate doubles exactly, so the mean reproduces the input
// bitwise (the sigma = 0 and M = 1 degeneracies stay exact).
std::vector<double> pairwise_mean(std::vector<std::vector<double>>& vecs) {
  size_t k = vecs.size();
  const double inv = 1.0 / static_cast<double>(k);
  while (k > 1) {
    const size_t half = k / 2;
    for (size_t p = 0; p < half; ++p) {
      auto& dst = vecs[p];
      const auto& a = vecs[2 * p];
      const auto& b = vecs[2 * p + 1];
      for (size_t j = 0; j < dst.size(); ++j) dst[j] = a[j] + b[j];
    }
    if (k % 2) vecs[half] = vecs[k - 1];
    k = half + (k % 2);
  }
  std::vector<double> out = vecs[0];
  for (double& x : out) x *= inv;
  return out;
}

}  // namespace

IncrementReport estimate_increment_ratio(const GradientNoiseModel& model,
                                         uint32_t groups, uint64_t trials,
                                         uint64_t seed) {
  model.validate();
  if (groups == 0) throw std::invalid_argument("groups must be >= 1");
  if (trials == 0) throw std::invalid_argument("trials must be >= 1");

  const uint32_t dim = model.dim;
  const uint32_t b = model.per_group_batch;
  const double inv_b = 1.0 / static_cast<double>(b);

  double sum_x = 0.0, sum_y = 0.0;
  double sum_xx = 0.0, sum_yy = 0.0, sum_xy = 0.0;

  std::vector<std::vector<double>> group_mean(groups,
                                              std::vector<double>(dim));
  for (uint64_t t = 0; t < trials; ++t) {
    CounterRng rng({seed, t});
    for (uint32_t m = 0; m < groups; ++m) {
      auto& gm = group_mean[m];
      std::fill(gm.begin(), gm.end(), 0.0);
      for (uint32_t s = 0; s < b; ++s) {
        for (uint32_t j = 0; j < dim; ++j) {
          gm[j] += model.mu[j] + model.sigma * rng.next_normal();
        }
      }
      for (uint32_t j = 0; j < dim; ++j) gm[j] *= inv_b;
    }
    const double x = norm_sq(group_mean[0]);
    const double y = norm_sq(pairwise_mean(group_mean));
    sum_x += x;
    sum_y += y;
    sum_xx += x * x;
    sum_yy += y * y;
    sum_xy += x * y;
  }

  const double n = static_cast<double>(trials);
  const double mx = sum_x / n;
  const double my = sum_y / n;
  const double ratio = mx / my;

  IncrementReport rep;
  rep.ratio_estimate = ratio;
  rep.trials = trials;
  rep.groups = groups;
  if (trials > 1) {
    const double vx = std::max(0.0, sum_xx / n - mx * mx);
    const double vy = std::max(0.0, sum_yy / n - my * my);
    const double cxy = sum_xy / n - mx * my;
    // Delta method for the ratio of correlated sample means.
    const double rel_var =
        vx / (mx * mx) + vy / (my * my) - 2.0 * cxy / (mx * my);
    rep.std_error = std::abs(ratio) * std::sqrt(std::max(0.0, rel_var) / n);
  }
  return rep;
}

double expected_group_increment(const GradientNoiseModel& model) {
  return model.mu_norm_sq() + static_cast<double>(model.dim) * model.sigma *
                                  model.sigma /
                                  static_cast<double>(model.per_group_batch);
}

double closed_form_ratio(const GradientNoiseModel& model, uint32_t groups) {
  model.validate();
  if (groups == 0) throw std::invalid_argument("groups must be >= 1");
  const double m = static_cast<double>(groups);
  if (model.sigma == 0.0) return 1.0;
  const double signal = model.mu_norm_sq();
  if (signal == 0.0) return m;
  const double noise = static_cast<double>(model.dim) * model.sigma *
                       model.sigma / static_cast<double>(model.per_group_batch);
  return (signal + noise) / (signal + noise / m);
}

double recommend_c(const GradientNoiseModel& model, uint32_t groups) {
  const double ratio = closed_form_ratio(model, groups);
  return std::min(ratio, static_cast<double>(groups));
}

}  // namespace sparse2d
