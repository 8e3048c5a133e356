#pragma once

#include "aslora/adapter.hpp"

#include <vector>

namespace aslora {

/// Incremental mean of a group's B over training steps. Updated as
/// mean += (b - mean) / count, which equals the arithmetic mean of all
/// observed snapshots without storing them.
struct RunningAverage {
  Tensor mean; // [model_dim, rank]
  long count = 0;
};

void observe(RunningAverage& avg, const Tensor& b);

/// Euclidean distance between two running means, all entries flattened.
/// Smaller values mean the groups' B factors have tracked each other more
/// closely; zero for identical histories.
real similarity(const RunningAverage& x, const RunningAverage& y);

/// Which group pairs a merge may choose from.
enum class PairScope { all_pairs, adjacent_only };

const char* pair_scope_name(PairScope s);
PairScope pair_scope_from_name(const std::string& name);

/// One oriented candidate pair: low/high by representative layer.
struct SimilarityEntry {
  int low_id = 0;
  int high_id = 0;
  int low_rep = 0;
  int high_rep = 0;
  /// True when the groups are neighbours in representative order.
  bool adjacent = false;
  real score = 0;
};

struct SimilarityReport {
  long step = 0;
  ProjType type = ProjType::query;
  std::vector<SimilarityEntry> entries;
};

/// Most similar pair allowed by the scope: minimum score, ties broken by
/// smallest (low_id, high_id). Pre: at least one entry is in scope.
const SimilarityEntry& select_pair(const SimilarityReport& report, PairScope scope);

/// When merges may fire. A merge step is any t with t > start_step,
/// (t - start_step) % interval == 0, while merges already done < budget.
struct MergeSchedule {
  long start_step = 400;
  long interval = 10;
  int budget = 0;
  PairScope scope = PairScope::all_pairs;

  bool fires_at(long step, int merges_done) const;
};

/// One applied merge, as written to the merge log. Member lists are the
/// pre-merge sets.
struct MergeEvent {
  long step = 0;
  ProjType type = ProjType::query;
  int survivor_id = 0;
  int absorbed_id = 0;
  std::vector<int> survivor_members;
  std::vector<int> absorbed_members;
  real score = 0;
  /// Discarded B factor, so the trainer can drop its optimizer state.
  /// Not serialized.
  Tensor absorbed_b;
};

/// Serializable per-group average for checkpoints.
struct AverageSnapshot {
  ProjType type = ProjType::query;
  int group_id = 0;
  long count = 0;
  Tensor mean;
};

/// Drives adaptive merging over one or more adapter banks. Observes every
/// group's B each step while budget remains; on merge steps it scores all
/// live pairs per bank, merges the most similar pair in each, and counts one
/// merge against the budget. Once the budget is spent all averages are
/// released and the engine goes quiescent.
class MergeEngine {
public:
  MergeEngine(MergeSchedule sched, std::vector<std::pair<ProjType, AdapterBank*>> banks);

  /// Hook called after optimizer step t (1-based). Returns the merges
  /// applied at this step (empty on non-merge steps). When reports is given
  /// it receives the full pair scoring for each bank on merge steps.
  std::vector<MergeEvent> on_step(long step, std::vector<SimilarityReport>* reports = nullptr);

  /// Full pair scoring for one bank at the current averages.
  SimilarityReport build_report(long step, ProjType type) const;

  int merges_done() const { return merges_done_; }
  int budget_remaining() const { return sched_.budget - merges_done_; }
  /// True while running averages are still being maintained.
  bool tracking() const { return merges_done_ < sched_.budget; }
  const MergeSchedule& schedule() const { return sched_; }

  const RunningAverage* average(ProjType type, int group_id) const;
  std::vector<AverageSnapshot> snapshot_averages() const;
  void restore(int merges_done, const std::vector<AverageSnapshot>& averages);

private:
  struct BankState {
    ProjType type;
    AdapterBank* bank;
    // Parallel to bank->groups() membership, keyed by group id.
    std::vector<std::pair<int, RunningAverage>> averages;
    RunningAverage* find(int group_id);
    const RunningAverage* find(int group_id) const;
  };

  MergeSchedule sched_;
  std::vector<BankState> banks_;
  int merges_done_ = 0;
};

} // namespace aslora
