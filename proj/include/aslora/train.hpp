#pragma once

#include "aslora/config.hpp"
#include "aslora/report.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>

namespace aslora {

/// Decoupled-weight-decay Adam. Moments are keyed by parameter storage and
/// created lazily on the first update; bias correction uses a per-parameter
/// step count so parameters created mid-run (none today) would still warm up
/// correctly.
class AdamW {
public:
  struct Settings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  struct Moments {
    std::vector<real> m, v;
    long steps = 0;
  };

  explicit AdamW(Settings s) : s_(s) {}

  /// Applies one update to every parameter and zeroes its gradient.
  /// Pre: every parameter has a gradient buffer (backward ran).
  void step(const std::vector<Tensor>& params, double lr);

  /// Forgets the state of a retired parameter (absorbed B factors).
  void drop(const Tensor& param);

  bool tracks(const Tensor& param) const;
  const Moments* find(const Tensor& param) const;
  void restore(const Tensor& param, Moments moments);
  size_t tracked_count() const { return state_.size(); }
  std::vector<const TensorImpl*> tracked_keys() const;
  const Settings& settings() const { return s_; }

private:
  Settings s_;
  std::unordered_map<const TensorImpl*, Moments> state_;
};

/// One row of the training log.
struct StepRecord {
  long step = 0;
  std::string phase;
  double loss = 0.0;
  double lr = 0.0;
  int live_groups_q = 0;
  int live_groups_v = 0;
  int64_t adapter_params = 0;
  std::vector<MergeEvent> events;
};

struct EvalPoint {
  long step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Output streams for Trainer::run; any may be null.
struct RunSinks {
  std::ostream* metrics = nullptr;    // CSV
  std::ostream* merges = nullptr;     // JSONL, one object per merge event
  std::ostream* similarity = nullptr; // JSONL, full pair scoring on merge steps
  std::ostream* progress = nullptr;   // human-readable evaluation lines
};

struct RunReport {
  std::vector<double> loss_by_step;
  std::vector<MergeEvent> merges;
  std::vector<EvalPoint> evals;
  std::map<std::string, std::vector<int>> assignments;
  int64_t final_adapter_params = 0;
  double initial_loss = 0.0;
  /// Mean loss over the final 25 steps (or all steps when shorter).
  double final_loss = 0.0;
  EvalPoint final_eval;
};

/// Owns one run end to end: model, task data, optimizer, merge engine, and
/// the step loop. Phases: "shared_training" through merge_start, then
/// "adaptive_merging" while merge budget remains, then "final_optimization".
class Trainer {
public:
  explicit Trainer(const RunConfig& cfg);

  /// Runs one optimization step (forward, backward, AdamW update, merge
  /// hook). Throws NumericError if the loss is not finite.
  StepRecord step() { return step_impl(nullptr); }

  /// Same, also collecting the full pair scoring when a merge fires.
  StepRecord step(std::vector<SimilarityReport>& reports) {
    return step_impl(&reports);
  }

  bool done() const { return step_ >= cfg_.plan.total_steps; }
  long current_step() const { return step_; }

  /// Steps to completion, streaming rows into the sinks.
  RunReport run(RunSinks* sinks = nullptr);

  /// Serializes model, optimizer, merge state, and RNG so a fresh Trainer of
  /// the same configuration can continue the run. Frozen base weights are
  /// verified against a stored hash rather than restored; trainable state
  /// travels through the 32-bit container (lossless in the default build).
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const RunConfig& config() const { return cfg_; }
  TransformerModel& model() { return *model_; }
  const TransformerModel& model() const { return *model_; }
  AdamW& optimizer() { return opt_; }
  MergeEngine* engine() { return engine_ ? engine_.get() : nullptr; }
  const TaskData& data() const { return data_; }
  uint64_t initial_base_hash() const { return base_hash_; }

  /// Phase label for step t given the current merge progress.
  std::string phase_at(long t) const;

  int64_t adapter_param_count() const;
  EvalPoint evaluate_split(const Dataset& ds);

private:
  StepRecord step_impl(std::vector<SimilarityReport>* reports);
  std::vector<int64_t> draw_batch_indices();

  RunConfig cfg_;
  std::unique_ptr<TransformerModel> model_;
  TaskData data_;
  AdamW opt_;
  std::unique_ptr<MergeEngine> engine_;
  RandomStream batch_rng_;
  long step_ = 0;
  uint64_t base_hash_ = 0;
};

} // namespace aslora
