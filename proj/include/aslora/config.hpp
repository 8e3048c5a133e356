#pragma once

#include "aslora/merge.hpp"
#include "aslora/model.hpp"
#include "aslora/task.hpp"

#include <json.hpp>

#include <string>

namespace aslora {

/// Optimization and merge schedule for one run.
struct TrainPlan {
  long total_steps = 2000;
  /// Merge window: first merge may fire at merge_start + merge_interval.
  long merge_start = 400;
  long merge_interval = 10;
  int merge_budget = 0;
  PairScope pair_scope = PairScope::all_pairs;
  double learning_rate = 1e-3;
  long warmup_steps = 100;
  double weight_decay = 0.0;
  int batch_size = 8;
  /// Evaluation cadence in steps; 0 disables periodic evaluation.
  long eval_every = 200;
};

/// Linear warmup to learning_rate, then linear decay to zero at total_steps.
/// Steps are 1-based; t must lie in [1, total_steps].
double lr_at(const TrainPlan& plan, long t);

/// Complete description of a training run. Everything a run does is a pure
/// function of this struct, so equal configs plus equal seeds reproduce
/// byte-identical logs.
struct RunConfig {
  std::string name;
  ModelConfig model;
  AdapterConfig adapter;
  TrainPlan plan;
  TaskSpec task;
  uint64_t seed = 42;

  void validate() const;
};

/// Parses a flat JSON object. Unknown keys are rejected; missing keys take
/// defaults. Derived defaults (a_init_std, task_seed) are resolved to
/// concrete values so materialize() round-trips exactly.
RunConfig parse_run_config(const nlohmann::json& j);

/// Reads and parses a config file. IoError on filesystem problems,
/// ConfigError on malformed or invalid content.
RunConfig load_run_config(const std::string& path);

/// Full config including every default, in canonical key order.
nlohmann::ordered_json materialize(const RunConfig& cfg);

/// Hash of the materialized form; checkpoints embed it to refuse resuming
/// under a different configuration.
uint64_t config_hash(const RunConfig& cfg);

} // namespace aslora
