#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "metadse/evaluation.hpp"
#include "metadse/meta_trainer.hpp"
#include "metadse/surrogate.hpp"
#include "metadse/wam.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

// Every knob of a pipeline run. Loaded from `key = value` text, then
// overridden field by field from the command line.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // never affects results, so not hashed

  PredictorConfig model;
  MetaConfig meta;

  // Synthetic family and its materialized datasets.
  std::size_t workloads = 17;
  FamilyOptions family;
  std::size_t samples_per_workload = 2000;
  std::size_t split_train = 7, split_val = 5, split_test = 5;

  // Downstream adaptation and evaluation.
  std::size_t adapt_steps = 10;
  double adapt_lr = 1e-5;
  std::size_t eval_tasks = 1000;
  MaskOptions mask;
  std::size_t similarity_probe = 1000;

  // Design-space text; empty means the canonical space. Hashed by content.
  std::string space_text;

  // Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& kv);
  void validate() const;

  // Canonical `key = value` listing of every hashed field, sorted by key.
  std::string to_text() const;
  // FNV-1a of to_text() plus the space text.
  std::string hash() const;

  DesignSpace space() const;
  ProtocolConfig protocol(std::uint64_t eval_seed) const;
  // Seeds of the individual stages, all derived from `seed`.
  std::map<std::string, std::uint64_t> seeds() const;
};

RunConfig load_run_config(const std::string& path);

}  // namespace metadse
