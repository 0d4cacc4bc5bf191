// Python bindings for the main operations: topology math, cost formulas,
// moment analysis, planning, the optimizer step and toy training runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "sparse2d/config.hpp"
#include "sparse2d/cost_model.hpp"
#include "sparse2d/experiment.hpp"
#include "sparse2d/moment_analysis.hpp"
#include "sparse2d/optimizer.hpp"
#include "sparse2d/planner.hpp"
#include "sparse2d/trainer.hpp"

namespace py = pybind11;
using namespace sparse2d;

namespace {

py::dict increment_report_to_dict(const IncrementReport& rep) {
  py::dict d;
  d["ratio_estimate"] = rep.ratio_estimate;
  d["std_error"] = rep.std_error;
  d["trials"] = rep.trials;
  d["groups"] = rep.groups;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "2D sparse parallelism simulator core";

  py::class_<Topology>(m, "Topology")
      .def(py::init<uint32_t, uint32_t>(), py::arg("total_ranks"),
           py::arg("groups"))
      .def_readonly("total_ranks", &Topology::total_ranks)
      .def_readonly("groups", &Topology::groups)
      .def_readonly("ranks_per_group", &Topology::ranks_per_group)
      .def("group_of", &Topology::group_of)
      .def("local_of", &Topology::local_of)
      .def("rank_of", &Topology::rank_of);

  m.def("memory_overhead", &memory_overhead, py::arg("table_size_gb"),
        py::arg("groups"), py::arg("total_gpus"));
  m.def("sync_latency", &sync_latency, py::arg("table_size_gb"),
        py::arg("groups"), py::arg("total_gpus"), py::arg("sync_bw_gbps"));
  m.def("qps_scaling_factor", &qps_scaling_factor, py::arg("qps_base"),
        py::arg("gpus_base"), py::arg("qps_new"), py::arg("gpus_new"));

  m.def(
      "closed_form_ratio",
      [](double mu_norm, double sigma, uint32_t dim, uint32_t batch,
         uint32_t groups) {
        return closed_form_ratio(make_noise_model(mu_norm, sigma, dim, batch),
                                 groups);
      },
      py::arg("mu_norm"), py::arg("sigma"), py::arg("dim"), py::arg("batch"),
      py::arg("groups"));
  m.def(
      "recommend_c",
      [](double mu_norm, double sigma, uint32_t dim, uint32_t batch,
         uint32_t groups) {
        return recommend_c(make_noise_model(mu_norm, sigma, dim, batch),
                           groups);
      },
      py::arg("mu_norm"), py::arg("sigma"), py::arg("dim"), py::arg("batch"),
      py::arg("groups"));
  m.def(
      "estimate_increment_ratio",
      [](double mu_norm, double sigma, uint32_t dim, uint32_t batch,
         uint32_t groups, uint64_t trials, uint64_t seed) {
        return increment_report_to_dict(estimate_increment_ratio(
            make_noise_model(mu_norm, sigma, dim, batch), groups, trials,
            seed));
      },
      py::arg("mu_norm"), py::arg("sigma"), py::arg("dim"), py::arg("batch"),
      py::arg("groups"), py::arg("trials"), py::arg("seed") = 1);

  m.def(
      "effective_lr",
      [](double v, double eta, double eps, double c) {
        OptimizerConfig cfg{eta, eps, c, OptimizerVariant::RowWiseAdagrad};
        cfg.validate();
        return effective_lr(v, cfg);
      },
      py::arg("v"), py::arg("eta") = 0.1, py::arg("eps") = 1e-8,
      py::arg("c") = 1.0);
  m.def(
      "adagrad_row_step",
      [](std::vector<float> w, float v, const std::vector<double>& g,
         double eta, double eps, double c) {
        OptimizerConfig cfg{eta, eps, c, OptimizerVariant::RowWiseAdagrad};
        cfg.validate();
        const double lr = adagrad_row_step(w, v, g, cfg);
        py::dict out;
        out["w"] = w;
        out["v"] = v;
        out["effective_lr"] = lr;
        return out;
      },
      py::arg("w"), py::arg("v"), py::arg("g"), py::arg("eta") = 0.1,
      py::arg("eps") = 1e-8, py::arg("c") = 1.0);

  m.def(
      "plan_greedy",
      [](const std::vector<std::tuple<uint32_t, uint64_t, double, uint64_t>>&
             profiles,
         uint32_t ranks, const std::string& strategy) {
        std::vector<TableLoadProfile> p;
        for (const auto& [id, bytes, lookups, rows] : profiles) {
          p.push_back({id, bytes, lookups, rows});
        }
        const auto plan = plan_greedy(p, ranks, parse_strategy(strategy));
        py::list out;
        for (const auto& e : plan.entries) {
          py::dict d;
          d["table_id"] = e.table_id;
          d["row_lo"] = e.row_lo;
          d["row_hi"] = e.row_hi;
          d["local_rank"] = e.local_rank;
          out.append(d);
        }
        return out;
      },
      py::arg("profiles"), py::arg("ranks"),
      py::arg("strategy") = "table-wise");
  m.def("imbalance_ratio", [](const std::vector<double>& loads) {
    return imbalance_ratio(loads);
  });

  m.def(
      "evaluate_ne",
      [](const std::vector<double>& probs, const std::vector<float>& labels) {
        const auto rep = evaluate_ne(probs, labels);
        py::dict d;
        d["ne"] = rep.ne;
        d["baseline_ctr"] = rep.baseline_ctr;
        d["eval_samples"] = rep.eval_samples;
        return d;
      },
      py::arg("probs"), py::arg("labels"));

  m.def(
      "train_toy",
      [](const std::map<std::string, std::string>& overrides) {
        ExperimentConfig cfg;
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        const auto art = run_train(cfg);
        py::dict d;
        d["final_ne"] = art.result.final_ne.ne;
        d["baseline_ctr"] = art.result.final_ne.baseline_ctr;
        d["qps_sim"] = art.result.qps_sim;
        d["peak_mem_bytes"] = art.result.peak_mem_bytes;
        d["config_hash"] = art.config_hash;
        return d;
      },
      py::arg("overrides") = std::map<std::string, std::string>{},
      "Run the training loop for a config given as {dotted_key: value}.");
}
