#include "sparse2d/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sparse2d/rng.hpp"

namespace sparse2d {

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::string msg = "configuration invalid (" +
                    std::to_string(issues.size()) + " issue(s)):";
  for (const auto& i : issues) {
    msg += "\n  - " + i;
  }
  return msg;
}

const std::map<std::string, std::string>& default_entries() {
  static const std::map<std::string, std::string> defaults = {
      {"topology.total_ranks", "8"},
      {"topology.groups", "1"},
      {"data.tables", "8"},
      {"data.rows_per_table", "10000"},
      {"data.ids_per_sample", "2"},
      {"data.zipf_exponent", "1.0"},
      {"data.dense_dim", "8"},
      {"data.gt_id_scale", "0.25"},
      {"data.gt_dense_scale", "0.35"},
      {"data.gt_bias", "-0.8"},
      {"model.dim", "16"},
      {"model.dense_hidden", "32"},
      {"model.over_hidden", "64"},
      {"optimizer.variant", "rowwise-adagrad"},
      {"optimizer.eta", "0.1"},
      {"optimizer.eps", "1e-8"},
      {"optimizer.c", "1.0"},
      {"run.steps", "1000"},
      {"run.per_rank_batch", "4"},
      {"run.sync_interval", "1"},
      {"run.eval_cadence", "0"},
      {"run.eval_samples", "100000"},
      {"run.seed", "1"},
      {"run.threads", "1"},
      {"run.trace", "false"},
      {"sharding.strategy", "row-wise"},
      {"bandwidth.alpha_s", "2e-6"},
      {"bandwidth.inter_bytes_per_s", "2.5e10"},
      {"bandwidth.intra_bytes_per_s", ""},  // empty = 7x inter
      {"bandwidth.ranks_per_host", "8"},
      {"compute.flops_per_s", "2e12"},
      {"seeds.data", ""},  // empty = derived from run.seed
      {"seeds.init", ""},
      {"seeds.eval", ""},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

class Parser {
 public:
  explicit Parser(const std::map<std::string, std::string>& values)
      : values_(values) {}

  uint64_t get_u64(const std::string& key, uint64_t lo, uint64_t hi) {
    const std::string& raw = values_.at(key);
    try {
      size_t pos = 0;
      const unsigned long long v = std::stoull(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing text");
      if (v < lo || v > hi) {
        issues.push_back(key + " = " + raw + " out of range [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return lo;
      }
      return v;
    } catch (const std::exception&) {
      issues.push_back(key + " = '" + raw + "' is not a valid integer");
      return lo;
    }
  }

  double get_double(const std::string& key, double lo, double hi) {
    const std::string& raw = values_.at(key);
    try {
      size_t pos = 0;
      const double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing text");
      if (!std::isfinite(v) || v < lo || v > hi) {
        issues.push_back(key + " = " + raw + " out of range");
        return lo;
      }
      return v;
    } catch (const std::exception&) {
      issues.push_back(key + " = '" + raw + "' is not a valid number");
      return lo;
    }
  }

  bool get_bool(const std::string& key) {
    const std::string& raw = values_.at(key);
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    issues.push_back(key + " = '" + raw + "' is not a boolean (true/false)");
    return false;
  }

  std::vector<std::string> issues;

 private:
  const std::map<std::string, std::string>& values_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

ExperimentConfig::ExperimentConfig() : values_(default_entries()) {}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  ExperimentConfig cfg;
  cfg.apply_file(path);
  return cfg;
}

void ExperimentConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError({"cannot open config file: " + path});
  }
  std::vector<std::string> issues;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      issues.push_back(path + ":" + std::to_string(lineno) +
                       ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!values_.count(key)) {
      issues.push_back(path + ":" + std::to_string(lineno) +
                       ": unknown key '" + key + "'");
      continue;
    }
    set(key, value);
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

void ExperimentConfig::apply_override(const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError({"--set expects KEY=VALUE, got '" + kv + "'"});
  }
  const std::string key = trim(kv.substr(0, eq));
  if (!values_.count(key)) {
    throw ConfigError({"unknown config key '" + key + "'"});
  }
  set(key, trim(kv.substr(eq + 1)));
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError({"unknown config key '" + key + "'"});
  }
  it->second = value;
  explicitly_set_[key] = true;
}

void ExperimentConfig::set_master_seed(uint64_t n) {
  set("run.seed", std::to_string(n));
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError({"unknown config key '" + key + "'"});
  }
  return it->second;
}

bool ExperimentConfig::has_explicit(const std::string& key) const {
  auto it = explicitly_set_.find(key);
  return it != explicitly_set_.end() && it->second;
}

TrainerOptions ExperimentConfig::resolve() const {
  Parser p(values_);
  TrainerOptions o;

  const uint64_t total = p.get_u64("topology.total_ranks", 1, 1u << 20);
  const uint64_t groups = p.get_u64("topology.groups", 1, 1u << 20);
  if (groups >= 1 && total >= 1 && total % groups != 0) {
    p.issues.push_back("topology.groups must divide topology.total_ranks");
  }

  o.model.num_tables =
      static_cast<uint32_t>(p.get_u64("data.tables", 1, 4096));
  o.model.rows_per_table =
      static_cast<uint32_t>(p.get_u64("data.rows_per_table", 1, 100000000));
  o.ids_per_sample =
      static_cast<uint32_t>(p.get_u64("data.ids_per_sample", 0, 1024));
  o.zipf_exponent = p.get_double("data.zipf_exponent", 0.0, 100.0);
  o.data.dense_dim =
      static_cast<uint32_t>(p.get_u64("data.dense_dim", 1, 4096));
  o.data.gt_id_scale = p.get_double("data.gt_id_scale", 0.0, 1e6);
  o.data.gt_dense_scale = p.get_double("data.gt_dense_scale", 0.0, 1e6);
  o.data.gt_bias = p.get_double("data.gt_bias", -1e6, 1e6);

  o.model.dim = static_cast<uint32_t>(p.get_u64("model.dim", 1, 512));
  o.model.dense_hidden =
      static_cast<uint32_t>(p.get_u64("model.dense_hidden", 1, 65536));
  o.model.over_hidden =
      static_cast<uint32_t>(p.get_u64("model.over_hidden", 1, 65536));

  try {
    o.opt.variant = parse_optimizer_variant(get("optimizer.variant"));
  } catch (const std::exception& e) {
    p.issues.push_back(e.what());
  }
  o.opt.eta = p.get_double("optimizer.eta", 1e-12, 1e6);
  o.opt.eps = p.get_double("optimizer.eps", 1e-30, 1e6);
  o.opt.c = p.get_double("optimizer.c", 1e-12, 1e9);

  o.steps = p.get_u64("run.steps", 1, 1ull << 40);
  o.per_rank_batch =
      static_cast<uint32_t>(p.get_u64("run.per_rank_batch", 1, 1 << 20));
  o.sync_interval =
      static_cast<uint32_t>(p.get_u64("run.sync_interval", 1, 1 << 20));
  o.eval_cadence = p.get_u64("run.eval_cadence", 0, 1ull << 40);
  o.eval_samples =
      static_cast<uint32_t>(p.get_u64("run.eval_samples", 1, 100000000));
  const uint64_t master = p.get_u64("run.seed", 0, ~0ull);
  o.threads = static_cast<uint32_t>(p.get_u64("run.threads", 1, 1024));
  o.collect_traces = p.get_bool("run.trace");

  try {
    o.strategy = parse_strategy(get("sharding.strategy"));
  } catch (const std::exception& e) {
    p.issues.push_back(e.what());
  }

  o.bw.alpha_s = p.get_double("bandwidth.alpha_s", 0.0, 1.0);
  o.bw.bw_inter = p.get_double("bandwidth.inter_bytes_per_s", 1.0, 1e18);
  if (get("bandwidth.intra_bytes_per_s").empty()) {
    o.bw.bw_intra = 7.0 * o.bw.bw_inter;  // intra-host is 7x faster
  } else {
    o.bw.bw_intra = p.get_double("bandwidth.intra_bytes_per_s", 1.0, 1e18);
  }
  o.bw.ranks_per_host =
      static_cast<uint32_t>(p.get_u64("bandwidth.ranks_per_host", 1, 1 << 20));
  o.compute_flops_per_s = p.get_double("compute.flops_per_s", 1.0, 1e24);

  auto seed_or = [&](const char* key, uint64_t lane) {
    if (get(key).empty()) return make_key({master, lane});
    return p.get_u64(key, 0, ~0ull);
  };
  o.data_seed = seed_or("seeds.data", 1);
  o.init_seed = seed_or("seeds.init", 2);
  o.eval_seed = seed_or("seeds.eval", 3);

  if (!p.issues.empty()) throw ConfigError(std::move(p.issues));

  o.topo = Topology(static_cast<uint32_t>(total),
                    static_cast<uint32_t>(groups));
  try {
    o.validate();
  } catch (const std::exception& e) {
    throw ConfigError({e.what()});
  }
  return o;
}

uint64_t ExperimentConfig::hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a 64
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [k, v] : values_) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

std::string ExperimentConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace sparse2d
