#pragma once

#include <cstdint>
#include <vector>

namespace sparse2d {

// Per-sample gradients are modeled as mu + N(0, sigma^2 I); groups draw
// i.i.d. batches of b samples.
struct GradientNoiseModel {
  std::vector<double> mu;      // signal; size == dim
  double sigma = 1.0;          // per-coordinate noise std dev
  uint32_t dim = 1;
  uint32_t per_group_batch = 1;  // b

  void validate() const;
  double mu_norm_sq() const;
};

GradientNoiseModel make_noise_model(double mu_norm, double sigma, uint32_t dim,
                                    uint32_t per_group_batch);

struct IncrementReport {
  double ratio_estimate = 0.0;
  double std_error = 0.0;
  uint64_t trials = 0;
  uint32_t groups = 0;
};

// Monte Carlo estimate of E|g_group|^2 / E|g_full|^2, where g_group averages
// b per-sample draws and g_full averages the same M*b draws (group 0's
// samples are shared, so sigma = 0 and M = 1 give ratio 1 exactly).
// Deterministic given the seed; trials use independent counter-RNG streams.
IncrementReport estimate_increment_ratio(const GradientNoiseModel& model,
                                         uint32_t groups, uint64_t trials,
                                         uint64_t seed);

// (|mu|^2 + dim*sigma^2/b) / (|mu|^2 + dim*sigma^2/(M*b)); always in [1, M].
// The degenerate cases are returned exactly (M for mu = 0, 1 for sigma = 0).
double closed_form_ratio(const GradientNoiseModel& model, uint32_t groups);

// Scaling-factor recommendation: the closed-form ratio clamped to (0, M].
// Increasing in the noise-to-signal ratio; 1 when noise-free, M for pure
// noise. This instantiation of the qualitative rule is implementation-
// defined; the source rule gives only the range and direction.
double recommend_c(const GradientNoiseModel& model, uint32_t groups);

// Per-group expected squared norm of the group gradient (closed form).
double expected_group_increment(const GradientNoiseModel& model);

}  // namespace sparse2d
