#include "sparse2d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include "sparse2d/rng.hpp"

namespace sparse2d {

NEReport evaluate_ne(std::span<const double> probs,
                     std::span<const float> labels) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw std::invalid_argument("evaluate_ne: empty or mismatched inputs");
  }
  const double n = static_cast<double>(probs.size());
  double label_sum = 0.0;
  for (float y : labels) label_sum += static_cast<double>(y);
  const double p_bar = label_sum / n;
  if (p_bar <= 0.0 || p_bar >= 1.0) {
    throw std::invalid_argument(
        "evaluate_ne: all labels identical, baseline entropy is zero");
  }
  double ce = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    ce -= labels[i] > 0.5f ? std::log(p) : std::log(1.0 - p);
  }
  ce /= n;
  const double baseline =
      -(p_bar * std::log(p_bar) + (1.0 - p_bar) * std::log(1.0 - p_bar));
  NEReport rep;
  rep.ne = ce / baseline;
  rep.baseline_ctr = p_bar;
  rep.eval_samples = probs.size();
  return rep;
}

double ne_gap_percent(double ne, double ne_baseline) {
  return 100.0 * (ne - ne_baseline) / ne_baseline;
}

void TrainerOptions::validate() const {
  model.validate();
  opt.validate();
  bw.validate();
  if (per_rank_batch < 1) {
    throw std::invalid_argument("per_rank_batch must be >= 1");
  }
  if (sync_interval < 1) {
    throw std::invalid_argument("sync_interval must be >= 1");
  }
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (!(zipf_exponent >= 0)) {
    throw std::invalid_argument("zipf_exponent must be >= 0");
  }
  if (!(compute_flops_per_s > 0)) {
    throw std::invalid_argument("compute_flops_per_s must be > 0");
  }
  if (eval_samples < 1) {
    throw std::invalid_argument("eval_samples must be >= 1");
  }
}

std::vector<FeatureSpec> TrainerOptions::feature_specs() const {
  std::vector<FeatureSpec> specs(model.num_tables);
  for (uint32_t f = 0; f < model.num_tables; ++f) {
    specs[f] = {f, model.rows_per_table, zipf_exponent, ids_per_sample};
  }
  return specs;
}

namespace {

// Static chunked parallelism; items write disjoint state, so any thread
// count produces the same result.
void parallel_for(uint32_t n, uint32_t threads,
                  const std::function<void(uint32_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (uint32_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const uint32_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (uint32_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (uint32_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

constexpr uint32_t kMaxDim = 512;

struct DemandEntry {
  uint32_t requester_local = 0;
  uint32_t sample = 0;
  uint32_t feature = 0;
  uint32_t id_begin = 0;
  uint32_t id_count = 0;
};

struct OwnerDemand {
  std::vector<DemandEntry> entries;  // canonical (requester, sample, feature)
  std::vector<uint32_t> ids;
  void clear() {
    entries.clear();
    ids.clear();
  }
};

struct RankWorkspace {
  MiniBatch batch;
  std::vector<uint32_t> owner_mask;  // per (sample*F + feature), bit per owner
  std::vector<float> over_in;        // B x (F*D + D); pooled part + dense vec
  std::vector<float> dense_hidden;
  std::vector<float> over_hidden;
  std::vector<double> probs;
  std::vector<float> upstream;       // B x F*D, f32 wire gradients
  std::vector<double> dx;            // over-arch input gradient scratch
  std::vector<double> dh_over;       // B x over_hidden
  std::vector<double> dh_dense;      // B x dense_hidden
  std::vector<double> ddense_out;    // B x D, upstream of the dense arch
  double loss_sum = 0.0;
  uint64_t lookup_rows_served = 0;
};

struct GroupWorkspace {
  std::vector<OwnerDemand> demand;                           // per owner
  std::vector<std::vector<std::vector<float>>> send_lookup;  // [owner][dst]
  std::vector<std::vector<std::vector<float>>> send_grad;    // [src][owner]
  std::vector<std::vector<Blob>> delivered_lookup;           // [dst][src]
  std::vector<std::vector<Blob>> delivered_grad;             // [owner][src]
  // rows touched since the last sync, per owner then table (owners update
  // concurrently, so each keeps its own list)
  std::vector<std::vector<std::vector<uint32_t>>> dirty_rows;
};

struct ShardRange {
  uint32_t lo = 0;
  uint32_t hi = 0;
  bool empty() const { return hi <= lo; }
};

}  // namespace

struct Trainer::Impl {
  TrainerOptions opts;
  Topology topo;
  uint32_t T, M, N, F, D, B;
  uint32_t over_in_dim;
  DataGenerator gen;
  std::vector<TableLoadProfile> profiles;
  ShardingPlan plan;
  std::vector<std::vector<uint8_t>> row_owner;        // [f][row] -> local rank
  std::vector<std::vector<ShardRange>> shard_range;   // [f][owner]
  std::vector<std::vector<EmbeddingTable>> replicas;  // [group][f]
  std::vector<RankModel> models;                      // per global rank

  std::vector<RankWorkspace> rank_ws;
  std::vector<GroupWorkspace> group_ws;
  std::vector<double> compute_cost;  // per rank, seconds, current step
  std::vector<CollectiveTrace> step_traces;
  std::vector<uint64_t> step_rank_bytes;  // a2a + sync bytes this step
  MlpGrads dense_mean, over_mean;

  TrainResult result;
  StepCostBreakdown cost_sum;
  uint64_t peak_step_a2a_bytes = 0;

  std::vector<Sample> eval_set;
  std::vector<float> eval_labels;

  explicit Impl(TrainerOptions o)
      : opts(std::move(o)),
        topo(opts.topo),
        gen(opts.feature_specs(), opts.data, opts.data_seed, opts.eval_seed) {
    opts.validate();
    T = topo.total_ranks;
    M = topo.groups;
    N = topo.ranks_per_group;
    F = opts.model.num_tables;
    D = opts.model.dim;
    B = opts.per_rank_batch;
    over_in_dim = opts.model.over_in();
    if (D > kMaxDim) throw std::invalid_argument("embedding dim too large");
    if (N > 32) {
      throw std::invalid_argument("owner bitmask limits ranks per group to 32");
    }

    for (const auto& spec : gen.specs()) {
      profiles.push_back(profile_from_spec(spec, D, N * B));
    }
    plan = plan_greedy(profiles, N, opts.strategy);
    validate_plan(plan, profiles);

    row_owner.assign(F, {});
    shard_range.assign(F, std::vector<ShardRange>(N));
    for (uint32_t f = 0; f < F; ++f) {
      row_owner[f].assign(opts.model.rows_per_table, 0);
      for (const auto& e : plan.entries) {
        if (e.table_id != f) continue;
        shard_range[f][e.local_rank] = {e.row_lo, e.row_hi};
        for (uint32_t r = e.row_lo; r < e.row_hi; ++r) {
          row_owner[f][r] = static_cast<uint8_t>(e.local_rank);
        }
      }
    }

    replicas.resize(M);
    for (uint32_t g = 0; g < M; ++g) {
      replicas[g].reserve(F);
      for (uint32_t f = 0; f < F; ++f) {
        // every group holds an identical initial replica
        replicas[g].push_back(
            init_table(f, opts.model.rows_per_table, D, opts.init_seed));
      }
    }
    models.reserve(T);
    for (uint32_t r = 0; r < T; ++r) {
      models.push_back(
          init_rank_model(opts.model, opts.data.dense_dim, opts.init_seed));
    }

    rank_ws.resize(T);
    for (auto& ws : rank_ws) {
      ws.owner_mask.resize(static_cast<size_t>(B) * F);
      ws.over_in.resize(static_cast<size_t>(B) * over_in_dim);
      ws.dense_hidden.resize(static_cast<size_t>(B) * opts.model.dense_hidden);
      ws.over_hidden.resize(static_cast<size_t>(B) * opts.model.over_hidden);
      ws.probs.resize(B);
      ws.upstream.resize(static_cast<size_t>(B) * F * D);
      ws.dx.resize(over_in_dim);
      ws.dh_over.resize(static_cast<size_t>(B) * opts.model.over_hidden);
      ws.dh_dense.resize(static_cast<size_t>(B) * opts.model.dense_hidden);
      ws.ddense_out.resize(static_cast<size_t>(B) * D);
    }
    group_ws.resize(M);
    for (auto& gw : group_ws) {
      gw.demand.resize(N);
      gw.send_lookup.assign(N, std::vector<std::vector<float>>(N));
      gw.send_grad.assign(N, std::vector<std::vector<float>>(N));
      gw.dirty_rows.assign(N, std::vector<std::vector<uint32_t>>(F));
    }
    compute_cost.resize(T);
    step_rank_bytes.resize(T);
    dense_mean.resize(models[0].dense_arch.dims());
    over_mean.resize(models[0].over_arch.dims());

    for (auto& slots : result.traffic) slots.resize(T);
  }

  size_t traffic_slot(KernelTag tag) const {
    switch (tag) {
      case KernelTag::LookupA2A: return 0;
      case KernelTag::GradA2A: return 1;
      default: return 2;
    }
  }

  void account_trace(uint64_t step, CollectiveTrace trace) {
    auto& slots = result.traffic[traffic_slot(trace.kernel)];
    for (size_t i = 0; i < trace.participants.size(); ++i) {
      const uint32_t r = trace.participants[i];
      slots[r].bytes_sent += trace.bytes_sent[i];
      slots[r].bytes_received += trace.bytes_received[i];
      step_rank_bytes[r] += trace.bytes_sent[i] + trace.bytes_received[i];
    }
    if (opts.collect_traces) {
      result.traces.push_back({step, trace});
    }
    step_traces.push_back(std::move(trace));
  }

  // ---- step phases ----------------------------------------------------

  void build_demand(uint32_t g) {
    auto& gw = group_ws[g];
    for (auto& d : gw.demand) d.clear();
    for (uint32_t n = 0; n < N; ++n) {
      auto& ws = rank_ws[topo.rank_of(g, n)];
      for (uint32_t s = 0; s < B; ++s) {
        const Sample& sample = ws.batch.samples[s];
        for (uint32_t f = 0; f < F; ++f) {
          uint32_t mask = 0;
          const auto& ids = sample.ids[f];
          const auto& owner_of = row_owner[f];
          for (uint32_t o = 0; o < N; ++o) {
            const uint32_t begin =
                static_cast<uint32_t>(gw.demand[o].ids.size());
            uint32_t count = 0;
            for (uint32_t id : ids) {
              if (owner_of[id] == o) {
                gw.demand[o].ids.push_back(id);
                ++count;
              }
            }
            if (count) {
              gw.demand[o].entries.push_back({n, s, f, begin, count});
              mask |= 1u << o;
            }
          }
          ws.owner_mask[static_cast<size_t>(s) * F + f] = mask;
        }
      }
    }
  }

  // Owner-side lookup: one f32 partial pool per demand entry.
  void owner_lookup(uint32_t g, uint32_t o) {
    auto& gw = group_ws[g];
    auto& tables = replicas[g];
    uint64_t rows_served = 0;
    for (auto& dst : gw.send_lookup[o]) dst.clear();
    double partial[kMaxDim];
    for (const auto& e : gw.demand[o].entries) {
      const EmbeddingTable& t = tables[e.feature];
      for (uint32_t j = 0; j < D; ++j) partial[j] = 0.0;
      for (uint32_t k = 0; k < e.id_count; ++k) {
        const float* row = t.row(gw.demand[o].ids[e.id_begin + k]);
        for (uint32_t j = 0; j < D; ++j) {
          partial[j] += static_cast<double>(row[j]);
        }
      }
      rows_served += e.id_count;
      auto& out = gw.send_lookup[o][e.requester_local];
      for (uint32_t j = 0; j < D; ++j) {
        out.push_back(static_cast<float>(partial[j]));
      }
    }
    rank_ws[topo.rank_of(g, o)].lookup_rows_served = rows_served;
  }

  // Serializes the f32 buffers into wire blobs, recycling the capacity of
  // the previous step's delivered matrix.
  std::vector<std::vector<Blob>> to_blobs(
      const std::vector<std::vector<std::vector<float>>>& bufs,
      std::vector<std::vector<Blob>>&& reuse) const {
    std::vector<std::vector<Blob>> payloads = std::move(reuse);
    if (payloads.size() != N) {
      payloads.assign(N, std::vector<Blob>(N));
    }
    for (uint32_t a = 0; a < N; ++a) {
      for (uint32_t b = 0; b < N; ++b) {
        const auto& src = bufs[a][b];
        auto& blob = payloads[a][b];
        blob.resize(src.size() * sizeof(float));
        if (!src.empty()) {
          std::memcpy(blob.data(), src.data(), blob.size());
        }
      }
    }
    return payloads;
  }

  static const float* blob_floats(const Blob& b) {
    return reinterpret_cast<const float*>(b.data());
  }

  void pool_and_forward(uint32_t g, uint32_t n) {
    auto& gw = group_ws[g];
    const uint32_t rank = topo.rank_of(g, n);
    auto& ws = rank_ws[rank];
    const RankModel& model = models[rank];
    uint32_t cursor[32] = {0};  // per-owner float offsets
    for (uint32_t s = 0; s < B; ++s) {
      float* over_in = &ws.over_in[static_cast<size_t>(s) * over_in_dim];
      for (uint32_t f = 0; f < F; ++f) {
        const uint32_t mask = ws.owner_mask[static_cast<size_t>(s) * F + f];
        double pool[kMaxDim];
        for (uint32_t j = 0; j < D; ++j) pool[j] = 0.0;
        for (uint32_t o = 0; o < N; ++o) {
          if (!(mask & (1u << o))) continue;
          const float* part =
              blob_floats(gw.delivered_lookup[n][o]) + cursor[o];
          for (uint32_t j = 0; j < D; ++j) {
            pool[j] += static_cast<double>(part[j]);
          }
          cursor[o] += D;
        }
        for (uint32_t j = 0; j < D; ++j) {
          over_in[f * D + j] = static_cast<float>(pool[j]);
        }
      }
      model.dense_arch.forward(
          ws.batch.samples[s].dense.data(),
          &ws.dense_hidden[static_cast<size_t>(s) * opts.model.dense_hidden],
          over_in + static_cast<size_t>(F) * D);
      float logit = 0.0f;
      model.over_arch.forward(
          over_in,
          &ws.over_hidden[static_cast<size_t>(s) * opts.model.over_hidden],
          &logit);
      ws.probs[s] = sigmoid(static_cast<double>(logit));
    }
  }

  void backward_rank(uint32_t g, uint32_t n, uint64_t step) {
    const uint32_t rank = topo.rank_of(g, n);
    auto& ws = rank_ws[rank];
    const RankModel& model = models[rank];
    ws.loss_sum = 0.0;
    for (uint32_t s = 0; s < B; ++s) {
      const double p = ws.probs[s];
      const double y = static_cast<double>(ws.batch.samples[s].label);
      const double loss = y > 0.5 ? -std::log(p) : -std::log(1.0 - p);
      if (!std::isfinite(loss)) {
        throw NumericalAbort("nonfinite loss at step " + std::to_string(step) +
                             " rank " + std::to_string(rank) + " sample " +
                             std::to_string(s));
      }
      ws.loss_sum += loss;
      const double dlogit = p - y;
      model.over_arch.backward_dx(
          &ws.over_hidden[static_cast<size_t>(s) * opts.model.over_hidden],
          &dlogit, &ws.dh_over[static_cast<size_t>(s) * opts.model.over_hidden],
          ws.dx.data());
      float* upstream = &ws.upstream[static_cast<size_t>(s) * F * D];
      for (uint32_t k = 0; k < F * D; ++k) {
        upstream[k] = static_cast<float>(ws.dx[k]);  // f32 wire format
      }
      double* ddense = &ws.ddense_out[static_cast<size_t>(s) * D];
      for (uint32_t j = 0; j < D; ++j) {
        ddense[j] = ws.dx[static_cast<size_t>(F) * D + j];
      }
      model.dense_arch.backward_dx(
          &ws.dense_hidden[static_cast<size_t>(s) * opts.model.dense_hidden],
          ddense,
          &ws.dh_dense[static_cast<size_t>(s) * opts.model.dense_hidden],
          nullptr);
    }
  }

  void build_grad_payloads(uint32_t g) {
    auto& gw = group_ws[g];
    for (uint32_t n = 0; n < N; ++n) {
      for (auto& dst : gw.send_grad[n]) dst.clear();
      auto& ws = rank_ws[topo.rank_of(g, n)];
      for (uint32_t s = 0; s < B; ++s) {
        const float* upstream = &ws.upstream[static_cast<size_t>(s) * F * D];
        for (uint32_t f = 0; f < F; ++f) {
          const uint32_t mask = ws.owner_mask[static_cast<size_t>(s) * F + f];
          for (uint32_t o = 0; o < N; ++o) {
            if (!(mask & (1u << o))) continue;
            auto& out = gw.send_grad[n][o];
            out.insert(out.end(), upstream + f * D, upstream + (f + 1) * D);
          }
        }
      }
    }
  }

  void owner_update(uint32_t g, uint32_t o) {
    auto& gw = group_ws[g];
    auto& tables = replicas[g];
    const uint32_t group_batch = N * B;
    const auto& entries = gw.demand[o].entries;

    // Copy the f32 wire gradients into per-feature f64 pools first so the
    // contribution spans below stay valid.
    std::vector<size_t> pool_size(F, 0);
    for (const auto& e : entries) pool_size[e.feature] += D;
    std::vector<std::vector<double>> grad_pool(F);
    for (uint32_t f = 0; f < F; ++f) grad_pool[f].reserve(pool_size[f]);
    std::vector<std::vector<RowGradContribution>> contribs(F);

    uint32_t cursor[32] = {0};  // per-requester float offsets
    std::vector<size_t> pool_used(F, 0);
    for (const auto& e : entries) {
      const float* grad = blob_floats(gw.delivered_grad[o][e.requester_local]) +
                          cursor[e.requester_local];
      cursor[e.requester_local] += D;
      auto& pool = grad_pool[e.feature];
      const size_t base = pool.size();
      for (uint32_t j = 0; j < D; ++j) {
        pool.push_back(static_cast<double>(grad[j]));
      }
      for (uint32_t k = 0; k < e.id_count; ++k) {
        contribs[e.feature].push_back(
            {gw.demand[o].ids[e.id_begin + k], {pool.data() + base, D}});
      }
    }

    for (uint32_t f = 0; f < F; ++f) {
      if (contribs[f].empty()) continue;
      auto grads = aggregate_group_gradient(contribs[f], group_batch, D);
      EmbeddingTable& table = tables[f];
      auto& dirty = gw.dirty_rows[o][f];
      for (const auto& rg : grads) {
        float* w = table.row(rg.row);
        if (opts.opt.variant == OptimizerVariant::Sgd) {
          sgd_row_step({w, D}, rg.g, opts.opt);
        } else {
          adagrad_row_step({w, D}, table.moments[rg.row], rg.g, opts.opt);
        }
        dirty.push_back(rg.row);
      }
    }
  }

  void dense_sync_and_apply() {
    // Global mean over T * B samples, accumulated as one left fold in
    // (rank, sample) order, then one SGD step applied identically on every
    // rank replica.
    dense_mean.reset();
    over_mean.reset();
    double loss_total = 0.0;
    for (uint32_t r = 0; r < T; ++r) {
      const auto& ws = rank_ws[r];
      const RankModel& model = models[r];
      for (uint32_t s = 0; s < B; ++s) {
        const double dlogit =
            ws.probs[s] - static_cast<double>(ws.batch.samples[s].label);
        model.over_arch.accumulate_grads(
            &ws.over_in[static_cast<size_t>(s) * over_in_dim],
            &ws.over_hidden[static_cast<size_t>(s) * opts.model.over_hidden],
            &dlogit,
            &ws.dh_over[static_cast<size_t>(s) * opts.model.over_hidden],
            over_mean);
        model.dense_arch.accumulate_grads(
            ws.batch.samples[s].dense.data(),
            &ws.dense_hidden[static_cast<size_t>(s) * opts.model.dense_hidden],
            &ws.ddense_out[static_cast<size_t>(s) * D],
            &ws.dh_dense[static_cast<size_t>(s) * opts.model.dense_hidden],
            dense_mean);
      }
      loss_total += ws.loss_sum;
    }
    const double inv_global = 1.0 / (static_cast<double>(T) * B);
    last_loss = loss_total * inv_global;
    // Every replica applies the same averaged step; ranks 1+ adopt rank 0's
    // result, which is bitwise what their own application would produce.
    models[0].dense_arch.apply_sgd(dense_mean, opts.opt.eta, inv_global);
    models[0].over_arch.apply_sgd(over_mean, opts.opt.eta, inv_global);
    for (uint32_t r = 1; r < T; ++r) {
      models[r].dense_arch.copy_params_from(models[0].dense_arch);
      models[r].over_arch.copy_params_from(models[0].over_arch);
    }
  }

  void sync_replicas(uint64_t step) {
    // Weights first, then moments (the listed order; both reductions read
    // only their own pre-sync state). Rows untouched since the last sync are
    // bitwise identical across replicas, and the mean of M identical values
    // reproduces them exactly, so reducing only the dirty-row union is
    // bitwise equivalent to the full-table sync. Trace bytes model the full
    // per-shard transfer the real system performs.
    std::vector<uint32_t> dirty_union;
    std::vector<float*> rep_ptr(M);
    const double inv_m = 1.0 / static_cast<double>(M);
    for (uint32_t f = 0; f < F; ++f) {
      dirty_union.clear();
      for (uint32_t g = 0; g < M; ++g) {
        for (uint32_t o = 0; o < N; ++o) {
          auto& d = group_ws[g].dirty_rows[o][f];
          dirty_union.insert(dirty_union.end(), d.begin(), d.end());
          d.clear();
        }
      }
      std::sort(dirty_union.begin(), dirty_union.end());
      dirty_union.erase(std::unique(dirty_union.begin(), dirty_union.end()),
                        dirty_union.end());
      // Same reduction as deterministic_mean_inplace, unrolled over rows
      // with hoisted replica pointers.
      float* const* rows = rep_ptr.data();
      for (uint32_t row : dirty_union) {
        for (uint32_t g = 0; g < M; ++g) rep_ptr[g] = replicas[g][f].row(row);
        for (uint32_t j = 0; j < D; ++j) {
          double acc = 0.0;
          for (uint32_t g = 0; g < M; ++g) {
            acc += static_cast<double>(rows[g][j]);
          }
          const float mean = static_cast<float>(acc * inv_m);
          for (uint32_t g = 0; g < M; ++g) rows[g][j] = mean;
        }
      }
      if (opts.opt.variant != OptimizerVariant::Sgd) {
        for (uint32_t g = 0; g < M; ++g) {
          rep_ptr[g] = replicas[g][f].moments.data();
        }
        for (uint32_t row : dirty_union) {
          double acc = 0.0;
          for (uint32_t g = 0; g < M; ++g) {
            acc += static_cast<double>(rows[g][row]);
          }
          const float mean = static_cast<float>(acc * inv_m);
          for (uint32_t g = 0; g < M; ++g) rows[g][row] = mean;
        }
      }
    }
    // One modeled all-reduce per local rank covering its full shard state
    // (weights + moments).
    for (uint32_t o = 0; o < N; ++o) {
      uint64_t bytes = 0;
      for (uint32_t f = 0; f < F; ++f) {
        const auto& sr = shard_range[f][o];
        if (sr.empty()) continue;
        bytes += static_cast<uint64_t>(sr.hi - sr.lo) * (D + 1) * sizeof(float);
      }
      if (bytes == 0) continue;
      account_trace(step,
                    ring_allreduce_trace(topo, o, bytes, opts.bw,
                                         KernelTag::TableAllReduce));
    }
  }

  double last_loss = 0.0;

  void run_step(uint64_t step) {
    step_traces.clear();
    std::fill(step_rank_bytes.begin(), step_rank_bytes.end(), 0);

    parallel_for(T, opts.threads, [&](uint32_t r) {
      gen.gen_batch_into(rank_ws[r].batch, step, r, B);
      rank_ws[r].lookup_rows_served = 0;
    });

    for (uint32_t g = 0; g < M; ++g) build_demand(g);

    parallel_for(M * N, opts.threads, [&](uint32_t i) {
      owner_lookup(i / N, i % N);
    });

    for (uint32_t g = 0; g < M; ++g) {
      auto res = route_all_to_all(
          topo, g,
          to_blobs(group_ws[g].send_lookup,
                   std::move(group_ws[g].delivered_lookup)),
          opts.bw, KernelTag::LookupA2A);
      group_ws[g].delivered_lookup = std::move(res.delivered);
      account_trace(step, std::move(res.trace));
    }

    parallel_for(T, opts.threads, [&](uint32_t r) {
      pool_and_forward(topo.group_of(r), topo.local_of(r));
      backward_rank(topo.group_of(r), topo.local_of(r), step);
    });

    for (uint32_t g = 0; g < M; ++g) {
      build_grad_payloads(g);
      auto res = route_all_to_all(
          topo, g,
          to_blobs(group_ws[g].send_grad, std::move(group_ws[g].delivered_grad)),
          opts.bw, KernelTag::GradA2A);
      group_ws[g].delivered_grad = std::move(res.delivered);
      account_trace(step, std::move(res.trace));
    }

    parallel_for(M * N, opts.threads, [&](uint32_t i) {
      owner_update(i / N, i % N);
    });

    dense_sync_and_apply();

    if (M > 1 && (step + 1) % opts.sync_interval == 0) {
      sync_replicas(step);
    }

    // per-rank compute cost for the serial kernel model
    const double flops_model =
        model_flops_per_sample(opts.model, opts.data.dense_dim);
    for (uint32_t r = 0; r < T; ++r) {
      const double flops =
          static_cast<double>(B) * flops_model +
          static_cast<double>(rank_ws[r].lookup_rows_served) * D * 6.0;
      compute_cost[r] = flops / opts.compute_flops_per_s;
    }
    const auto breakdown = simulate_step_latency(step_traces, compute_cost);
    cost_sum.lookup_a2a_s += breakdown.lookup_a2a_s;
    cost_sum.grad_a2a_s += breakdown.grad_a2a_s;
    cost_sum.table_allreduce_s += breakdown.table_allreduce_s;
    cost_sum.compute_s += breakdown.compute_s;
    cost_sum.total_s += breakdown.total_s;

    for (uint32_t r = 0; r < T; ++r) {
      peak_step_a2a_bytes = std::max(peak_step_a2a_bytes, step_rank_bytes[r]);
    }
  }

  // ---- evaluation -----------------------------------------------------

  void ensure_eval_set() {
    if (!eval_set.empty()) return;
    const uint32_t chunk = 1024;
    eval_set.reserve(opts.eval_samples);
    MiniBatch mb;
    uint64_t idx = 0;
    while (eval_set.size() < opts.eval_samples) {
      const uint32_t take = static_cast<uint32_t>(std::min<uint64_t>(
          chunk, opts.eval_samples - eval_set.size()));
      gen.gen_batch_into(mb, idx++, 0, take, DataGenerator::kEval);
      for (auto& s : mb.samples) eval_set.push_back(s);
    }
    eval_labels.resize(eval_set.size());
    for (size_t i = 0; i < eval_set.size(); ++i) {
      eval_labels[i] = eval_set[i].label;
    }
  }

  // Direct forward on the consensus replica (group 0) with rank 0's MLPs;
  // bitwise equal to the routed pooling because pool_ids uses the same
  // per-owner partial order.
  std::vector<double> eval_probs() {
    ensure_eval_set();
    std::vector<double> probs(eval_set.size());
    std::vector<std::vector<ShardRef>> table_shards(F);
    for (uint32_t f = 0; f < F; ++f) {
      for (uint32_t o = 0; o < N; ++o) {
        const auto& sr = shard_range[f][o];
        if (!sr.empty()) {
          table_shards[f].push_back({&replicas[0][f], sr.lo, sr.hi});
        }
      }
    }
    const RankModel& model = models[0];
    parallel_for(
        static_cast<uint32_t>((eval_set.size() + 1023) / 1024), opts.threads,
        [&](uint32_t c) {
          std::vector<float> over_in(over_in_dim);
          std::vector<float> dhid(opts.model.dense_hidden);
          std::vector<float> ohid(opts.model.over_hidden);
          const size_t lo = static_cast<size_t>(c) * 1024;
          const size_t hi = std::min(eval_set.size(), lo + 1024);
          for (size_t i = lo; i < hi; ++i) {
            const Sample& s = eval_set[i];
            for (uint32_t f = 0; f < F; ++f) {
              pool_ids(table_shards[f], s.ids[f], &over_in[f * D]);
            }
            model.dense_arch.forward(s.dense.data(), dhid.data(),
                                     &over_in[static_cast<size_t>(F) * D]);
            float logit = 0.0f;
            model.over_arch.forward(over_in.data(), ohid.data(), &logit);
            probs[i] = sigmoid(static_cast<double>(logit));
          }
        });
    return probs;
  }

  MetricsRow make_metrics_row(uint64_t step_1based,
                              std::span<const double> probs) {
    MetricsRow row;
    row.step = step_1based;
    row.loss = last_loss;
    row.ne = evaluate_ne(probs, eval_labels).ne;

    std::vector<double> lrs;
    lrs.reserve(static_cast<size_t>(F) * opts.model.rows_per_table);
    double v_sum = 0.0;
    for (uint32_t f = 0; f < F; ++f) {
      for (float v : replicas[0][f].moments) {
        v_sum += static_cast<double>(v);
        lrs.push_back(effective_lr(static_cast<double>(v), opts.opt));
      }
    }
    auto pct = [&](double q) {
      const size_t idx = static_cast<size_t>(
          std::ceil(q * static_cast<double>(lrs.size()))) - 1;
      std::nth_element(lrs.begin(), lrs.begin() + idx, lrs.end());
      return lrs[idx];
    };
    row.eff_lr_p50 = pct(0.50);
    row.eff_lr_p99 = pct(0.99);
    row.v_mean = v_sum / static_cast<double>(lrs.size());
    return row;
  }

  uint64_t steps_done = 0;
  bool final_eval_done = false;

  void step_n(uint64_t count) {
    for (uint64_t i = 0; i < count; ++i) {
      const uint64_t k = steps_done++;
      run_step(k);
      const bool last = steps_done == opts.steps;
      const bool cadence =
          opts.eval_cadence > 0 && steps_done % opts.eval_cadence == 0;
      if (cadence || last) {
        const auto probs = eval_probs();
        result.metrics.push_back(make_metrics_row(steps_done, probs));
        if (last) {
          result.final_ne = evaluate_ne(probs, eval_labels);
          final_eval_done = true;
        }
      }
    }
  }

  TrainResult run() {
    step_n(opts.steps - steps_done);
    return finalize();
  }

  TrainResult finalize() {
    if (!final_eval_done) {
      const auto probs = eval_probs();
      result.final_ne = evaluate_ne(probs, eval_labels);
      final_eval_done = true;
    }
    const double steps_d = static_cast<double>(std::max<uint64_t>(1, steps_done));
    result.mean_step_cost.lookup_a2a_s = cost_sum.lookup_a2a_s / steps_d;
    result.mean_step_cost.grad_a2a_s = cost_sum.grad_a2a_s / steps_d;
    result.mean_step_cost.table_allreduce_s =
        cost_sum.table_allreduce_s / steps_d;
    result.mean_step_cost.compute_s = cost_sum.compute_s / steps_d;
    result.mean_step_cost.total_s = cost_sum.total_s / steps_d;
    result.qps_sim = static_cast<double>(T) * B / result.mean_step_cost.total_s;
    result.peak_mem_bytes = simulated_peak_mem();
    return std::move(result);
  }

  uint64_t simulated_peak_mem() const {
    // storage of owned shards + worst-step a2a footprint + MLP replicas +
    // one resident mini-batch
    uint64_t max_storage = 0;
    for (uint32_t o = 0; o < N; ++o) {
      uint64_t b = 0;
      for (uint32_t f = 0; f < F; ++f) {
        const auto& sr = shard_range[f][o];
        if (!sr.empty()) {
          b += static_cast<uint64_t>(sr.hi - sr.lo) * (D + 1) * sizeof(float);
        }
      }
      max_storage = std::max(max_storage, b);
    }
    const auto& m = models[0];
    const uint64_t mlp_bytes =
        (m.dense_arch.w1.size() + m.dense_arch.b1.size() +
         m.dense_arch.w2.size() + m.dense_arch.b2.size() +
         m.over_arch.w1.size() + m.over_arch.b1.size() +
         m.over_arch.w2.size() + m.over_arch.b2.size()) *
        sizeof(float);
    uint64_t batch_bytes = 0;
    for (const auto& spec : gen.specs()) {
      batch_bytes += static_cast<uint64_t>(spec.ids_per_sample) * 4;
    }
    batch_bytes += static_cast<uint64_t>(opts.data.dense_dim) * 4 + 4;
    batch_bytes *= B;
    return max_storage + peak_step_a2a_bytes + mlp_bytes + batch_bytes;
  }
};

Trainer::Trainer(TrainerOptions opts) : impl_(new Impl(std::move(opts))) {}
Trainer::~Trainer() = default;

TrainResult Trainer::run() { return impl_->run(); }

void Trainer::step_n(uint64_t count) { impl_->step_n(count); }

TrainResult Trainer::finalize() { return impl_->finalize(); }

std::vector<const EmbeddingTable*> Trainer::tables() const {
  return replica_tables(0);
}

std::vector<const EmbeddingTable*> Trainer::replica_tables(
    uint32_t group) const {
  std::vector<const EmbeddingTable*> out;
  out.reserve(impl_->F);
  for (const auto& t : impl_->replicas.at(group)) out.push_back(&t);
  return out;
}

const ShardingPlan& Trainer::plan() const { return impl_->plan; }

const RankModel& Trainer::rank_model(uint32_t rank) const {
  return impl_->models.at(rank);
}

void Trainer::save_tables(const std::string& path) const {
  const auto t = tables();
  save_checkpoint(path, t);
}

void Trainer::load_tables(const std::string& path) {
  auto loaded = load_checkpoint(path);
  if (loaded.size() != impl_->F) {
    throw std::runtime_error("checkpoint table count mismatch");
  }
  for (uint32_t f = 0; f < impl_->F; ++f) {
    const auto& src = loaded[f];
    if (src.rows != impl_->opts.model.rows_per_table || src.dim != impl_->D) {
      throw std::runtime_error("checkpoint shape mismatch for table " +
                               std::to_string(f));
    }
    for (uint32_t g = 0; g < impl_->M; ++g) {
      impl_->replicas[g][f].weights = src.weights;
      impl_->replicas[g][f].moments = src.moments;
    }
  }
}

}  // namespace sparse2d
