#include "sparse2d/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sparse2d/model.hpp"
#include "sparse2d/rng.hpp"

namespace sparse2d {

namespace {

// Stream tags keeping the per-purpose RNG streams disjoint.
enum : uint64_t {
  kTagIds = 1,
  kTagDense = 2,
  kTagLabel = 3,
  kTagGtId = 10,
  kTagGtDense = 11,
};

}  // namespace

void FeatureSpec::validate() const {
  if (num_ids < 1) {
    throw std::invalid_argument("feature " + std::to_string(table_id) +
                                ": num_ids must be >= 1");
  }
  if (!(zipf_exponent >= 0.0)) {
    throw std::invalid_argument("feature " + std::to_string(table_id) +
                                ": zipf_exponent must be >= 0");
  }
}

GroundTruthModel::GroundTruthModel(uint64_t seed,
                                   const std::vector<FeatureSpec>& specs,
                                   uint32_t dense_dim, double id_scale,
                                   double dense_scale, double bias)
    : bias_(bias) {
  id_contrib_.resize(specs.size());
  for (size_t f = 0; f < specs.size(); ++f) {
    CounterRng rng({seed, kTagGtId, f});
    id_contrib_[f].resize(specs[f].num_ids);
    for (uint32_t i = 0; i < specs[f].num_ids; ++i) {
      id_contrib_[f][i] = static_cast<float>(id_scale * rng.next_normal());
    }
  }
  CounterRng rng({seed, kTagGtDense});
  dense_weight_.resize(dense_dim);
  for (uint32_t j = 0; j < dense_dim; ++j) {
    dense_weight_[j] = static_cast<float>(dense_scale * rng.next_normal());
  }
}

double GroundTruthModel::logit(const Sample& s) const {
  double z = bias_;
  for (size_t j = 0; j < dense_weight_.size() && j < s.dense.size(); ++j) {
    z += static_cast<double>(dense_weight_[j]) * static_cast<double>(s.dense[j]);
  }
  for (size_t f = 0; f < s.ids.size() && f < id_contrib_.size(); ++f) {
    for (uint32_t id : s.ids[f]) {
      z += static_cast<double>(id_contrib_[f][id]);
    }
  }
  return z;
}

DataGenerator::DataGenerator(std::vector<FeatureSpec> specs, DataParams params,
                             uint64_t data_seed)
    : DataGenerator(std::move(specs), params, data_seed, data_seed) {}

DataGenerator::DataGenerator(std::vector<FeatureSpec> specs, DataParams params,
                             uint64_t data_seed, uint64_t eval_seed)
    : specs_(std::move(specs)),
      params_(params),
      data_seed_(data_seed),
      eval_seed_(eval_seed),
      gt_(data_seed, specs_, params.dense_dim, params.gt_id_scale,
          params.gt_dense_scale, params.gt_bias) {
  if (specs_.empty()) {
    throw std::invalid_argument("at least one feature spec required");
  }
  zipf_cdf_.resize(specs_.size());
  for (size_t f = 0; f < specs_.size(); ++f) {
    specs_[f].validate();
    const auto& spec = specs_[f];
    auto& cdf = zipf_cdf_[f];
    cdf.resize(spec.num_ids);
    double total = 0.0;
    for (uint32_t k = 0; k < spec.num_ids; ++k) {
      total += std::pow(static_cast<double>(k + 1), -spec.zipf_exponent);
      cdf[k] = total;
    }
    for (auto& v : cdf) v /= total;
    cdf.back() = 1.0;
  }
}

double DataGenerator::zipf_cdf(uint32_t feature, uint32_t k) const {
  const auto& cdf = zipf_cdf_.at(feature);
  if (k == 0) return 0.0;
  if (k >= cdf.size()) return 1.0;
  return cdf[k - 1];
}

MiniBatch DataGenerator::gen_batch(uint64_t step, uint32_t rank,
                                   uint32_t batch_size, Lane lane) const {
  MiniBatch batch;
  gen_batch_into(batch, step, rank, batch_size, lane);
  return batch;
}

void DataGenerator::gen_batch_into(MiniBatch& batch, uint64_t step,
                                   uint32_t rank, uint32_t batch_size,
                                   Lane lane) const {
  const uint64_t seed = lane == kEval ? eval_seed_ : data_seed_;
  batch.rank = rank;
  batch.step = step;
  batch.samples.resize(batch_size);
  for (uint32_t s = 0; s < batch_size; ++s) {
    Sample& sample = batch.samples[s];
    sample.ids.resize(specs_.size());
    for (size_t f = 0; f < specs_.size(); ++f) {
      const auto& spec = specs_[f];
      const auto& cdf = zipf_cdf_[f];
      CounterRng rng({seed, lane, step, rank, s, kTagIds, f});
      auto& ids = sample.ids[f];
      ids.resize(spec.ids_per_sample);
      for (uint32_t j = 0; j < spec.ids_per_sample; ++j) {
        const double u = rng.next_uniform();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        ids[j] = static_cast<uint32_t>(
            std::min<size_t>(it - cdf.begin(), spec.num_ids - 1));
      }
    }
    CounterRng dense_rng({seed, lane, step, rank, s, kTagDense});
    sample.dense.resize(params_.dense_dim);
    for (uint32_t j = 0; j < params_.dense_dim; ++j) {
      sample.dense[j] = static_cast<float>(dense_rng.next_normal());
    }
    const double p = sigmoid(gt_.logit(sample));
    CounterRng label_rng({seed, lane, step, rank, s, kTagLabel});
    sample.label = label_rng.next_uniform() < p ? 1.0f : 0.0f;
  }
}

std::vector<MiniBatch> DataGenerator::global_batch(
    uint64_t step, const Topology& topo, uint32_t per_rank_batch) const {
  std::vector<MiniBatch> out;
  out.reserve(topo.total_ranks);
  for (uint32_t r = 0; r < topo.total_ranks; ++r) {
    out.push_back(gen_batch(step, r, per_rank_batch));
  }
  return out;
}

MiniBatch gen_batch(uint64_t global_seed, uint64_t step, uint32_t rank,
                    const std::vector<FeatureSpec>& specs, uint32_t batch_size,
                    DataParams params) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  DataGenerator gen(specs, params, global_seed);
  return gen.gen_batch(step, rank, batch_size);
}

std::vector<MiniBatch> global_batch(uint64_t global_seed, uint64_t step,
                                    const Topology& topo,
                                    const std::vector<FeatureSpec>& specs,
                                    uint32_t per_rank_batch,
                                    DataParams params) {
  DataGenerator gen(specs, params, global_seed);
  return gen.global_batch(step, topo, per_rank_batch);
}

}  // namespace sparse2d
