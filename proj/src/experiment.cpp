#include "sparse2d/experiment.hpp"

#include <cmath>
#include <future>
#include <stdexcept>

#include "sparse2d/csv.hpp"

namespace sparse2d {

std::optional<std::string> sweep_axis_key(const std::string& axis) {
  if (axis == "c" || axis == "optimizer.c") return "optimizer.c";
  if (axis == "M" || axis == "topology.groups") return "topology.groups";
  if (axis == "T" || axis == "topology.total_ranks") {
    return "topology.total_ranks";
  }
  if (axis == "sync_interval" || axis == "run.sync_interval") {
    return "run.sync_interval";
  }
  return std::nullopt;
}

RunArtifact run_train(const ExperimentConfig& cfg) {
  TrainerOptions opts = cfg.resolve();
  Trainer trainer(opts);
  RunArtifact art;
  art.result = trainer.run();
  art.config_hash = cfg.hash_hex();
  art.metrics_csv = metrics_to_csv(art.result, art.config_hash);
  if (opts.collect_traces) {
    art.trace_csv = traces_to_csv(art.result, art.config_hash);
  }
  return art;
}

std::string metrics_to_csv(const TrainResult& r, const std::string& cfg_hash) {
  CsvBuilder csv;
  csv.comment("config_hash=" + cfg_hash);
  csv.header("step,loss,ne,eff_lr_p50,eff_lr_p99,v_mean");
  for (const auto& m : r.metrics) {
    csv.row({std::to_string(m.step), fmt_g9(m.loss), fmt_g9(m.ne),
             fmt_g9(m.eff_lr_p50), fmt_g9(m.eff_lr_p99), fmt_g9(m.v_mean)});
  }
  return csv.str();
}

std::string traces_to_csv(const TrainResult& r, const std::string& cfg_hash) {
  CsvBuilder csv;
  csv.comment("config_hash=" + cfg_hash);
  csv.comment("bytes = routed bytes sent by the rank (self-delivery included)");
  csv.header("step,kernel,rank,bytes,latency_s");
  for (const auto& st : r.traces) {
    const auto& t = st.trace;
    for (size_t i = 0; i < t.participants.size(); ++i) {
      csv.row({std::to_string(st.step), kernel_name(t.kernel),
               std::to_string(t.participants[i]),
               std::to_string(t.bytes_sent[i]), fmt_g9(t.rank_latency_s[i])});
    }
  }
  return csv.str();
}

namespace {

// Expected per-rank lookup loads for the resolved config, Zipf mass included.
double config_imbalance_ratio(const ExperimentConfig& cfg) {
  TrainerOptions opts = cfg.resolve();
  DataGenerator gen(opts.feature_specs(), opts.data, opts.data_seed,
                    opts.eval_seed);
  std::vector<TableLoadProfile> profiles;
  const uint32_t group_batch =
      opts.topo.ranks_per_group * opts.per_rank_batch;
  for (const auto& spec : gen.specs()) {
    profiles.push_back(profile_from_spec(spec, opts.model.dim, group_batch));
  }
  const ShardingPlan plan =
      plan_greedy(profiles, opts.topo.ranks_per_group, opts.strategy);
  std::vector<double> loads(plan.ranks_per_group, 0.0);
  for (const auto& e : plan.entries) {
    loads[e.local_rank] +=
        expected_shard_lookups(gen, e.table_id, e.row_lo, e.row_hi,
                               group_batch);
  }
  return imbalance_ratio(loads);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<uint64_t>& seeds) {
  const auto key = sweep_axis_key(axis);
  if (!key) {
    throw ConfigError({"unknown sweep axis '" + axis +
                       "' (expected c, M, T or sync_interval)"});
  }
  if (values.empty()) throw ConfigError({"sweep needs at least one value"});
  if (seeds.empty()) throw ConfigError({"sweep needs at least one seed"});

  // Shared baseline: M = 1 with standard AdaGrad (c = 1), one per seed.
  std::vector<RunArtifact> baseline(seeds.size());
  std::vector<std::future<RunArtifact>> base_futures;
  for (size_t i = 0; i < seeds.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.set("topology.groups", "1");
    cfg.set("optimizer.c", "1.0");
    cfg.set_master_seed(seeds[i]);
    base_futures.push_back(std::async(
        std::launch::async, [cfg] { return run_train(cfg); }));
  }
  for (size_t i = 0; i < seeds.size(); ++i) {
    baseline[i] = base_futures[i].get();
  }

  SweepResult out;
  for (const auto& value : values) {
    SweepPointResult point;
    point.value = value;

    std::vector<std::future<RunArtifact>> futures;
    for (size_t i = 0; i < seeds.size(); ++i) {
      ExperimentConfig cfg = base;
      cfg.set(*key, value);
      cfg.set_master_seed(seeds[i]);
      futures.push_back(std::async(
          std::launch::async, [cfg] { return run_train(cfg); }));
    }

    double ne_sum = 0.0, gap_sum = 0.0;
    for (size_t i = 0; i < seeds.size(); ++i) {
      RunArtifact art = futures[i].get();
      const double ne = art.result.final_ne.ne;
      ne_sum += ne;
      gap_sum += ne_gap_percent(ne, baseline[i].result.final_ne.ne);
      point.per_seed.push_back(std::move(art));
    }
    point.final_ne = ne_sum / static_cast<double>(seeds.size());
    point.ne_gap_vs_m1_pct = gap_sum / static_cast<double>(seeds.size());
    point.qps_sim = point.per_seed[0].result.qps_sim;
    point.peak_mem_bytes = point.per_seed[0].result.peak_mem_bytes;
    {
      ExperimentConfig cfg = base;
      cfg.set(*key, value);
      cfg.set_master_seed(seeds[0]);
      point.imbalance_ratio = config_imbalance_ratio(cfg);
    }
    out.points.push_back(std::move(point));
  }

  CsvBuilder csv;
  csv.comment("axis=" + *key);
  csv.header("value,final_ne,ne_gap_vs_M1,qps_sim,peak_mem_sim,imbalance_ratio");
  for (const auto& p : out.points) {
    csv.row({p.value, fmt_g9(p.final_ne), fmt_g9(p.ne_gap_vs_m1_pct),
             fmt_g9(p.qps_sim), std::to_string(p.peak_mem_bytes),
             fmt_g9(p.imbalance_ratio)});
  }
  out.comparison_csv = csv.str();
  return out;
}

}  // namespace sparse2d
