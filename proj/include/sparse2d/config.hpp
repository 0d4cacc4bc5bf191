#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse2d/trainer.hpp"

namespace sparse2d {

// All validation problems of one load, reported together.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

// Flat dotted-key = value experiment configuration. Every key has a default;
// file entries and --set overrides replace them. Unknown keys are errors.
class ExperimentConfig {
 public:
  ExperimentConfig();  // defaults only

  static ExperimentConfig from_file(const std::string& path);

  void apply_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);  // "key=value"
  void set(const std::string& key, const std::string& value);
  // Applies the master seed: run.seed = n (per-lane seeds derive from it
  // unless explicitly set).
  void set_master_seed(uint64_t n);

  // Validates everything, collecting all issues into one ConfigError.
  TrainerOptions resolve() const;

  const std::string& get(const std::string& key) const;
  bool has_explicit(const std::string& key) const;

  // FNV-1a over the sorted resolved key=value lines.
  uint64_t hash() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;     // resolved (defaults+edits)
  std::map<std::string, bool> explicitly_set_;
};

}  // namespace sparse2d
