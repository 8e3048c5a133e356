#pragma once

#include "aslora/model.hpp"

#include <string>
#include <vector>

namespace aslora {

/// Synthetic task families. All are pure functions of (spec, seed).
///
///   copy_class:      binary, positive iff a marker token occurs anywhere;
///                    solvable by a linear probe on token counts.
///   layerwise_probe: binary, k marker tokens are planted and the label says
///                    whether they occur in ascending marker order, so the
///                    signal is a depth-k composition of position comparisons.
///   seq_regression:  target is the mean of fixed per-token weights.
enum class TaskKind { copy_class, layerwise_probe, seq_regression };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::layerwise_probe;
  int seq_len = 16;
  int num_train = 256;
  int num_eval = 128;
  /// Classification: label flip probability. Regression: target noise stddev.
  double noise_rate = 0.0;
  /// Marker chain length for layerwise_probe.
  int probe_depth = 2;
  uint64_t seed = 1;

  void validate(int vocab_size) const;
  bool classification() const { return kind != TaskKind::seq_regression; }
};

struct Example {
  std::vector<int> tokens;
  int label = 0;   // classification
  real target = 0; // regression
};

struct Dataset {
  bool classification = true;
  int seq_len = 0;
  std::vector<Example> examples;

  int64_t size() const { return static_cast<int64_t>(examples.size()); }
};

struct TaskData {
  Dataset train;
  Dataset eval;
};

/// Generates disjoint train/eval splits. Class labels are balanced within
/// one example per split; duplicates across both splits are redrawn.
TaskData generate_task(const TaskSpec& spec, int vocab_size);

/// Flattened minibatch ready for TransformerModel::forward.
struct Batch {
  std::vector<int> tokens;
  std::vector<int> labels;
  std::vector<real> targets;
  int batch = 0;
  int seq = 0;
};

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices);

struct EvalResult {
  bool classification = true;
  double loss = 0.0;     // mean cross-entropy, or mse for regression
  double accuracy = 0.0; // classification only
  int64_t total = 0;
};

/// Full-dataset evaluation without recording gradients.
/// Pre: dataset non-empty.
EvalResult evaluate(TransformerModel& model, const Dataset& ds, int batch_size);

} // namespace aslora
