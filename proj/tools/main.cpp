// Command-line front end: train / plan / cost / verify-prop1 / simulate /
// sweep subcommands over the experiment config format.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sparse2d/config.hpp"
#include "sparse2d/cost_model.hpp"
#include "sparse2d/csv.hpp"
#include "sparse2d/experiment.hpp"
#include "sparse2d/moment_analysis.hpp"
#include "sparse2d/planner.hpp"
#include "sparse2d/trainer.hpp"

namespace fs = std::filesystem;
using namespace sparse2d;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "experiment config file");
  cmd->add_option("--set", c.overrides, "override KEY=VALUE (repeatable)");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "master seed (run.seed)");
}

ExperimentConfig build_config(const CommonOpts& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg.apply_file(c.config_path);
  for (const auto& kv : c.overrides) cfg.apply_override(kv);
  if (c.seed) cfg.set_master_seed(*c.seed);
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

int cmd_train(const CommonOpts& c, const std::string& save_path,
              const std::string& load_path, const std::string& trace_out,
              bool simulate_only) {
  ExperimentConfig cfg = build_config(c);
  if (!trace_out.empty() || simulate_only) cfg.set("run.trace", "true");
  TrainerOptions opts = cfg.resolve();
  Trainer trainer(opts);
  if (!load_path.empty()) trainer.load_tables(load_path);
  TrainResult result = trainer.run();
  const std::string hash = cfg.hash_hex();

  if (!c.out_dir.empty()) {
    ensure_dir(c.out_dir);
    atomic_write_file(c.out_dir + "/metrics.csv", metrics_to_csv(result, hash));
    if (opts.collect_traces) {
      atomic_write_file(c.out_dir + "/trace.csv", traces_to_csv(result, hash));
    }
  }
  if (!trace_out.empty()) {
    atomic_write_file(trace_out, traces_to_csv(result, hash));
  }
  if (!save_path.empty()) trainer.save_tables(save_path);

  CsvBuilder summary;
  summary.comment("config_hash=" + hash);
  if (simulate_only) {
    summary.header(
        "kernel_lookup_a2a_s,kernel_grad_a2a_s,kernel_table_allreduce_s,"
        "kernel_compute_s,total_step_s,qps_sim,peak_mem_bytes");
    summary.row({fmt_g9(result.mean_step_cost.lookup_a2a_s),
                 fmt_g9(result.mean_step_cost.grad_a2a_s),
                 fmt_g9(result.mean_step_cost.table_allreduce_s),
                 fmt_g9(result.mean_step_cost.compute_s),
                 fmt_g9(result.mean_step_cost.total_s), fmt_g9(result.qps_sim),
                 std::to_string(result.peak_mem_bytes)});
  } else {
    summary.header("final_ne,baseline_ctr,eval_samples,qps_sim,peak_mem_bytes");
    summary.row({fmt_g9(result.final_ne.ne),
                 fmt_g9(result.final_ne.baseline_ctr),
                 std::to_string(result.final_ne.eval_samples),
                 fmt_g9(result.qps_sim),
                 std::to_string(result.peak_mem_bytes)});
  }
  std::cout << summary.str();
  return 0;
}

int cmd_plan(const std::string& manifest, uint32_t ranks,
             const std::string& strategy, uint32_t dim,
             const std::string& out_path) {
  std::ifstream in(manifest);
  if (!in) {
    throw ConfigError({"cannot open profile manifest: " + manifest});
  }
  std::vector<TableLoadProfile> profiles;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (lineno == 1 && !cells.empty() && cells[0] == "table_id") continue;
    if (cells.size() < 3) {
      throw ConfigError({manifest + ":" + std::to_string(lineno) +
                         ": expected table_id,size_bytes,lookups[,num_rows]"});
    }
    TableLoadProfile p;
    p.table_id = static_cast<uint32_t>(std::stoul(cells[0]));
    p.size_bytes = std::stoull(cells[1]);
    p.expected_lookups_per_batch = std::stod(cells[2]);
    if (cells.size() >= 4 && !cells[3].empty()) {
      p.num_rows = std::stoull(cells[3]);
    } else {
      // weights-only bytes at 4 bytes per element
      p.num_rows = std::max<uint64_t>(1, p.size_bytes / (4ull * dim));
    }
    profiles.push_back(p);
  }

  const ShardingPlan plan = plan_greedy(profiles, ranks,
                                        parse_strategy(strategy));
  const auto loads = plan_rank_loads(plan, profiles);
  const double ratio = imbalance_ratio(loads);

  CsvBuilder csv;
  csv.header("table_id,row_lo,row_hi,local_rank");
  for (const auto& e : plan.entries) {
    csv.row({std::to_string(e.table_id), std::to_string(e.row_lo),
             std::to_string(e.row_hi), std::to_string(e.local_rank)});
  }
  csv.comment("imbalance_ratio=" + fmt_g9(ratio) + " status=" +
              imbalance_label(ratio));
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    csv.write(out_path);
    std::cout << "# imbalance_ratio=" << fmt_g9(ratio)
              << " status=" << imbalance_label(ratio) << "\n";
  }
  return 0;
}

int cmd_cost(uint32_t total_gpus, const std::string& groups_list,
             double table_size_gb, double sync_bw) {
  CsvBuilder csv;
  csv.header("groups,total_gpus,table_size_gb,sync_bw_gbps,mem_overhead_gb,"
             "sync_latency_s");
  const BandwidthModel bw;
  for (const auto& tok : split_list(groups_list)) {
    const uint32_t m = static_cast<uint32_t>(std::stoul(tok));
    // Host-aligned replica groups sync intra-host by default (7x inter).
    const double b = sync_bw > 0
                         ? sync_bw
                         : bw.sync_bandwidth(m) / 1e9;
    ClusterSpec spec{total_gpus, m, table_size_gb, b};
    const CostEstimate est = estimate_cost(spec);
    csv.row({std::to_string(m), std::to_string(total_gpus),
             fmt_g9(table_size_gb), fmt_g9(b), fmt_g9(est.mem_overhead_gb),
             fmt_g9(est.sync_latency_s)});
  }
  std::cout << csv.str();
  return 0;
}

int cmd_verify_prop1(uint32_t groups, uint64_t trials, double mu_norm,
                     double sigma, uint32_t dim, uint32_t batch,
                     uint64_t seed) {
  const auto model = make_noise_model(mu_norm, sigma, dim, batch);
  const auto rep = estimate_increment_ratio(model, groups, trials, seed);
  CsvBuilder csv;
  csv.header(
      "groups,trials,mu_norm,sigma,dim,batch,seed,ratio_estimate,std_error,"
      "closed_form_ratio,recommended_c");
  csv.row({std::to_string(groups), std::to_string(trials), fmt_g9(mu_norm),
           fmt_g9(sigma), std::to_string(dim), std::to_string(batch),
           std::to_string(seed), fmt_g9(rep.ratio_estimate),
           fmt_g9(rep.std_error), fmt_g9(closed_form_ratio(model, groups)),
           fmt_g9(recommend_c(model, groups))});
  std::cout << csv.str();
  return 0;
}

int cmd_sweep(const CommonOpts& c, const std::string& axis,
              const std::string& values_list, const std::string& seeds_list) {
  ExperimentConfig base = build_config(c);
  const auto values = split_list(values_list);
  std::vector<uint64_t> seeds;
  for (const auto& s : split_list(seeds_list)) seeds.push_back(std::stoull(s));
  if (seeds.empty()) {
    seeds.push_back(std::stoull(base.get("run.seed")));
  }

  const SweepResult res = run_sweep(base, axis, values, seeds);

  if (!c.out_dir.empty()) {
    ensure_dir(c.out_dir);
    for (const auto& point : res.points) {
      for (size_t i = 0; i < point.per_seed.size(); ++i) {
        const std::string dir = c.out_dir + "/point_" + axis + "=" +
                                point.value + "/seed_" +
                                std::to_string(seeds[i]);
        ensure_dir(dir);
        atomic_write_file(dir + "/metrics.csv",
                          point.per_seed[i].metrics_csv);
        if (!point.per_seed[i].trace_csv.empty()) {
          atomic_write_file(dir + "/trace.csv", point.per_seed[i].trace_csv);
        }
      }
    }
    atomic_write_file(c.out_dir + "/comparison.csv", res.comparison_csv);
  }
  std::cout << res.comparison_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-dimensional sparse parallelism simulator"};
  app.require_subcommand(1);

  CommonOpts train_c, sim_c, sweep_c;
  std::string save_path, load_path, trace_out, sim_trace_out;

  auto* train = app.add_subcommand("train", "run the 2D training loop");
  add_common(train, train_c);
  train->add_option("--save", save_path, "write final table checkpoint");
  train->add_option("--load", load_path, "load table checkpoint before training");
  train->add_option("--trace-out", trace_out, "write collective trace CSV");

  auto* simulate = app.add_subcommand(
      "simulate", "run the loop for traffic/latency accounting");
  add_common(simulate, sim_c);
  simulate->add_option("--trace-out", sim_trace_out, "write collective trace CSV");

  std::string manifest, plan_strategy = "table-wise", plan_out;
  uint32_t plan_ranks = 1, plan_dim = 16;
  auto* plan = app.add_subcommand("plan", "compute a sharding plan");
  plan->add_option("--manifest", manifest,
                   "profile CSV: table_id,size_bytes,lookups[,num_rows]")
      ->required();
  plan->add_option("--ranks", plan_ranks, "ranks per group")->required();
  plan->add_option("--strategy", plan_strategy, "table-wise | row-wise");
  plan->add_option("--dim", plan_dim, "embedding dim for deriving row counts");
  plan->add_option("--out-plan", plan_out, "plan CSV path (default stdout)");

  uint32_t cost_gpus = 1024;
  std::string cost_groups = "1,2,4,8";
  double cost_size = 1700.0, cost_bw = 0.0;
  auto* cost = app.add_subcommand("cost", "deployment cost formulas");
  cost->add_option("--total-gpus", cost_gpus, "total GPUs (T)");
  cost->add_option("--groups", cost_groups, "comma list of group counts (M)");
  cost->add_option("--table-size-gb", cost_size, "total table size S in GB");
  cost->add_option("--sync-bw", cost_bw,
                   "sync bandwidth GB/s (default: bandwidth model)");

  uint32_t p1_groups = 4, p1_dim = 16, p1_batch = 32;
  uint64_t p1_trials = 100000, p1_seed = 1;
  double p1_mu = 0.0, p1_sigma = 1.0;
  auto* prop1 = app.add_subcommand("verify-prop1",
                                   "Monte Carlo moment-increment ratio");
  prop1->add_option("--groups", p1_groups, "group count M");
  prop1->add_option("--trials", p1_trials, "Monte Carlo trials");
  prop1->add_option("--mu-norm", p1_mu, "norm of the mean gradient");
  prop1->add_option("--sigma", p1_sigma, "per-coordinate noise std dev");
  prop1->add_option("--dim", p1_dim, "gradient dimension");
  prop1->add_option("--batch", p1_batch, "per-group batch b");
  prop1->add_option("--seed", p1_seed, "RNG seed");

  std::string sweep_axis, sweep_values, sweep_seeds;
  auto* sweep = app.add_subcommand("sweep", "axis sweep with comparison CSV");
  add_common(sweep, sweep_c);
  sweep->add_option("--axis", sweep_axis, "c | M | T | sync_interval")
      ->required();
  sweep->add_option("--values", sweep_values, "comma list of axis values")
      ->required();
  sweep->add_option("--seeds", sweep_seeds, "comma list of master seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(train_c, save_path, load_path, trace_out, false);
    }
    if (simulate->parsed()) {
      return cmd_train(sim_c, "", "", sim_trace_out, true);
    }
    if (plan->parsed()) {
      return cmd_plan(manifest, plan_ranks, plan_strategy, plan_dim, plan_out);
    }
    if (cost->parsed()) {
      return cmd_cost(cost_gpus, cost_groups, cost_size, cost_bw);
    }
    if (prop1->parsed()) {
      return cmd_verify_prop1(p1_groups, p1_trials, p1_mu, p1_sigma, p1_dim,
                              p1_batch, p1_seed);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_c, sweep_axis, sweep_values, sweep_seeds);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
