#pragma once

#include <cstdint>
#include <vector>

#include "sparse2d/topology.hpp"

namespace sparse2d {

// One sparse categorical feature backed by its own embedding table.
struct FeatureSpec {
  uint32_t table_id = 0;
  uint32_t num_ids = 1;        // distinct categorical IDs
  double zipf_exponent = 0.0;  // 0 = uniform
  uint32_t ids_per_sample = 1; // pooling fan-in

  void validate() const;
};

struct Sample {
  std::vector<std::vector<uint32_t>> ids;  // per feature
  std::vector<float> dense;
  float label = 0.0f;
};

struct MiniBatch {
  std::vector<Sample> samples;
  uint32_t rank = 0;
  uint64_t step = 0;
};

// Fixed logistic labeling model: label ~ Bernoulli(sigmoid(bias +
// w_dense.dense + sum of per-ID contributions)). Seeded once; labels are a
// learnable function of the IDs so NE comparisons carry signal.
class GroundTruthModel {
 public:
  GroundTruthModel() = default;
  GroundTruthModel(uint64_t seed, const std::vector<FeatureSpec>& specs,
                   uint32_t dense_dim, double id_scale, double dense_scale,
                   double bias);

  double logit(const Sample& s) const;
  double bias() const { return bias_; }

 private:
  std::vector<std::vector<float>> id_contrib_;  // [feature][id]
  std::vector<float> dense_weight_;
  double bias_ = 0.0;
};

struct DataParams {
  uint32_t dense_dim = 8;
  double gt_id_scale = 0.25;
  double gt_dense_scale = 0.35;
  double gt_bias = -0.8;
};

// Deterministic batch source. All draws are keyed by
// (seed, lane, step, rank, sample, purpose), so a batch is a pure function
// of those coordinates regardless of call order.
class DataGenerator {
 public:
  enum Lane : uint64_t { kTrain = 0, kEval = 1 };

  // The eval lane draws from eval_seed so the held-out stream is independent
  // of the training stream; labels always come from the data_seed-keyed
  // ground truth.
  DataGenerator(std::vector<FeatureSpec> specs, DataParams params,
                uint64_t data_seed, uint64_t eval_seed);
  DataGenerator(std::vector<FeatureSpec> specs, DataParams params,
                uint64_t data_seed);

  MiniBatch gen_batch(uint64_t step, uint32_t rank, uint32_t batch_size,
                      Lane lane = kTrain) const;

  // Buffer-reusing variant for hot loops; identical output.
  void gen_batch_into(MiniBatch& batch, uint64_t step, uint32_t rank,
                      uint32_t batch_size, Lane lane = kTrain) const;

  // One disjoint per-rank batch for every rank of the topology.
  std::vector<MiniBatch> global_batch(uint64_t step, const Topology& topo,
                                      uint32_t per_rank_batch) const;

  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const DataParams& params() const { return params_; }
  const GroundTruthModel& ground_truth() const { return gt_; }
  uint64_t data_seed() const { return data_seed_; }

  // P(id < k) under the feature's Zipf law; used for expected shard loads.
  double zipf_cdf(uint32_t feature, uint32_t k) const;

 private:
  std::vector<FeatureSpec> specs_;
  DataParams params_;
  uint64_t data_seed_;
  uint64_t eval_seed_;
  GroundTruthModel gt_;
  std::vector<std::vector<double>> zipf_cdf_;  // per feature, cumulative mass
};

// Pure-function form of the generator (constructs the cached state per call).
MiniBatch gen_batch(uint64_t global_seed, uint64_t step, uint32_t rank,
                    const std::vector<FeatureSpec>& specs, uint32_t batch_size,
                    DataParams params = {});

std::vector<MiniBatch> global_batch(uint64_t global_seed, uint64_t step,
                                    const Topology& topo,
                                    const std::vector<FeatureSpec>& specs,
                                    uint32_t per_rank_batch,
                                    DataParams params = {});

}  // namespace sparse2d
