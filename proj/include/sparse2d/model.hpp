#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sparse2d {

// Fixed-order dot product with four strided partials combined pairwise.
// Every matvec in the project goes through this so all paths round
// identically.
double dot_f64(const double* w, const double* x, uint32_t n);

struct MlpDims {
  uint32_t in = 1;
  uint32_t hidden = 1;
  uint32_t out = 1;
};

struct MlpGrads {
  std::vector<double> w1, b1, w2, b2;
  void resize(const MlpDims& d);
  void reset();
};

// One-hidden-layer ReLU perceptron. Parameters are stored as f32 (the
// canonical state) with an f64 mirror used by the compute paths; the mirror
// is an exact widening, so results match computing from f32 directly.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpDims dims);                      // zero-initialized
  Mlp(MlpDims dims, uint64_t seed, uint64_t tag);  // U(-1/sqrt(fan_in), ...)

  const MlpDims& dims() const { return dims_; }

  // hidden must hold dims.hidden floats, out dims.out floats.
  void forward(const float* x, float* hidden, float* out) const;

  // ReLU-masked hidden gradient and (optionally) the input gradient.
  // dhidden must hold dims.hidden doubles, dx dims.in doubles.
  void backward_dx(const float* hidden, const double* dout, double* dhidden,
                   double* dx) const;

  // Accumulates one sample's parameter gradients (unnormalized) into g.
  void accumulate_grads(const float* x, const float* hidden,
                        const double* dout, const double* dhidden,
                        MlpGrads& g) const;

  // w -= lr * scale * g for every parameter; refreshes the mirror.
  void apply_sgd(const MlpGrads& g, double lr, double scale);

  // Call after editing w1/b1/w2/b2 directly.
  void sync_mirror();

  // Adopts another replica's parameters (and mirror) wholesale.
  void copy_params_from(const Mlp& other);

  std::vector<float> w1, b1, w2, b2;  // w1: hidden x in, w2: out x hidden

 private:
  MlpDims dims_;
  std::vector<double> w1_d, w2_d;
};

// Architecture knobs; the dense feature width lives with the data config and
// is passed in where needed.
struct DlrmConfig {
  uint32_t num_tables = 8;
  uint32_t rows_per_table = 10000;
  uint32_t dim = 16;          // embedding dim D
  uint32_t dense_hidden = 32;
  uint32_t over_hidden = 64;

  uint32_t over_in() const { return num_tables * dim + dim; }
  void validate() const;
};

// The data-parallel half of the model: per-rank MLP replicas.
struct RankModel {
  Mlp dense_arch;  // dense_dim -> dense_hidden -> dim
  Mlp over_arch;   // num_tables*dim + dim -> over_hidden -> 1
};

RankModel init_rank_model(const DlrmConfig& cfg, uint32_t dense_dim,
                          uint64_t init_seed);

double sigmoid(double x);

// Flops per sample for forward plus backward; used by the compute-cost model.
double model_flops_per_sample(const DlrmConfig& cfg, uint32_t dense_dim);

}  // namespace sparse2d
