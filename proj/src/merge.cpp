#include "aslora/merge.hpp"

#include <algorithm>
#include <cmath>

namespace aslora {

void observe(RunningAverage& avg, const Tensor& b) {
  if (avg.count == 0) {
    avg.mean = b.clone();
    avg.mean.set_requires_grad(false);
    avg.count = 1;
    return;
  }
  if (avg.mean.shape() != b.shape())
    throw ContractError("observe: snapshot shape " + shape_str(b.shape()) +
                        " does not match average " + shape_str(avg.mean.shape()));
  avg.count += 1;
  const real inv = real(1) / static_cast<real>(avg.count);
  real* m = avg.mean.data();
  const real* v = b.data();
  for (int64_t i = 0; i < b.numel(); ++i) m[i] += (v[i] - m[i]) * inv;
}

real similarity(const RunningAverage& x, const RunningAverage& y) {
  if (x.count == 0 || y.count == 0)
    throw ContractError("similarity: both averages must have observations");
  if (x.mean.shape() != y.mean.shape())
    throw ContractError("similarity: shape mismatch " + shape_str(x.mean.shape()) +
                        " vs " + shape_str(y.mean.shape()));
  double acc = 0.0;
  const real* a = x.mean.data();
  const real* b = y.mean.data();
  for (int64_t i = 0; i < x.mean.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return static_cast<real>(std::sqrt(acc));
}

const char* pair_scope_name(PairScope s) {
  return s == PairScope::all_pairs ? "all_pairs" : "adjacent_only";
}

PairScope pair_scope_from_name(const std::string& name) {
  if (name == "all_pairs") return PairScope::all_pairs;
  if (name == "adjacent_only") return PairScope::adjacent_only;
  throw ConfigError("unknown pair scope '" + name + "'");
}

const SimilarityEntry& select_pair(const SimilarityReport& report, PairScope scope) {
  const SimilarityEntry* best = nullptr;
  for (const auto& e : report.entries) {
    if (scope == PairScope::adjacent_only && !e.adjacent) continue;
    if (best == nullptr || e.score < best->score ||
        (e.score == best->score &&
         std::pair(e.low_id, e.high_id) < std::pair(best->low_id, best->high_id)))
      best = &e;
  }
  if (best == nullptr)
    throw ContractError("select_pair: no candidate pair in scope");
  return *best;
}

bool MergeSchedule::fires_at(long step, int merges_done) const {
  if (budget <= 0 || merges_done >= budget) return false;
  if (step <= start_step) return false;
  return (step - start_step) % interval == 0;
}

RunningAverage* MergeEngine::BankState::find(int group_id) {
  for (auto& [id, avg] : averages)
    if (id == group_id) return &avg;
  return nullptr;
}

const RunningAverage* MergeEngine::BankState::find(int group_id) const {
  for (const auto& [id, avg] : averages)
    if (id == group_id) return &avg;
  return nullptr;
}

MergeEngine::MergeEngine(MergeSchedule sched,
                         std::vector<std::pair<ProjType, AdapterBank*>> banks)
    : sched_(sched) {
  if (sched_.interval <= 0) throw ConfigError("merge_interval: must be positive");
  if (sched_.start_step < 0) throw ConfigError("merge_start: must be non-negative");
  if (sched_.budget < 0) throw ConfigError("merge_budget: must be non-negative");
  if (banks.empty()) throw ContractError("merge engine: needs at least one bank");
  for (auto& [type, bank] : banks) {
    if (bank == nullptr) throw ContractError("merge engine: null bank");
    if (sched_.budget > 0 && bank->config().mode != ShareMode::aslora)
      throw ContractError("merge engine: a positive budget requires aslora mode");
    if (sched_.budget >= bank->live_groups())
      if (sched_.budget > 0)
        throw ConfigError("merge_budget: must be below the initial group count " +
                          std::to_string(bank->live_groups()));
    BankState st;
    st.type = type;
    st.bank = bank;
    banks_.push_back(std::move(st));
  }
}

SimilarityReport MergeEngine::build_report(long step, ProjType type) const {
  const BankState* state = nullptr;
  for (const auto& b : banks_)
    if (b.type == type) state = &b;
  if (state == nullptr) throw ContractError("build_report: no bank for type");

  // Live groups in representative order define adjacency.
  std::vector<const ShareGroup*> ordered;
  for (const auto& g : state->bank->groups()) ordered.push_back(&g);
  std::sort(ordered.begin(), ordered.end(), [](const ShareGroup* x, const ShareGroup* y) {
    return x->representative() < y->representative();
  });

  SimilarityReport report;
  report.step = step;
  report.type = type;
  for (size_t i = 0; i < ordered.size(); ++i) {
    for (size_t j = i + 1; j < ordered.size(); ++j) {
      const RunningAverage* ai = state->find(ordered[i]->id);
      const RunningAverage* aj = state->find(ordered[j]->id);
      if (ai == nullptr || aj == nullptr)
        throw ContractError("build_report: missing running average for a live group");
      SimilarityEntry e;
      e.low_id = ordered[i]->id;
      e.high_id = ordered[j]->id;
      e.low_rep = ordered[i]->representative();
      e.high_rep = ordered[j]->representative();
      e.adjacent = j == i + 1;
      e.score = similarity(*ai, *aj);
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

std::vector<MergeEvent> MergeEngine::on_step(long step,
                                             std::vector<SimilarityReport>* reports) {
  std::vector<MergeEvent> events;
  if (!tracking()) return events;

  // Accumulate this step's B into every live group's mean.
  for (auto& state : banks_) {
    for (const auto& g : state.bank->groups()) {
      RunningAverage* avg = state.find(g.id);
      if (avg == nullptr) {
        state.averages.emplace_back(g.id, RunningAverage{});
        avg = &state.averages.back().second;
      }
      observe(*avg, g.b);
    }
  }

  if (sched_.fires_at(step, merges_done_)) {
    for (auto& state : banks_) {
      if (state.bank->live_groups() < 2)
        throw ContractError("merge engine: cannot merge with fewer than 2 groups");
      SimilarityReport report = build_report(step, state.type);
      const SimilarityEntry chosen = select_pair(report, sched_.scope);
      if (reports != nullptr) reports->push_back(std::move(report));

      MergeOutcome outcome = state.bank->merge_groups(chosen.low_id, chosen.high_id);
      state.averages.erase(
          std::remove_if(state.averages.begin(), state.averages.end(),
                         [&](const auto& kv) { return kv.first == outcome.absorbed_id; }),
          state.averages.end());

      MergeEvent ev;
      ev.step = step;
      ev.type = state.type;
      ev.survivor_id = outcome.survivor_id;
      ev.absorbed_id = outcome.absorbed_id;
      ev.survivor_members = std::move(outcome.survivor_members);
      ev.absorbed_members = std::move(outcome.absorbed_members);
      ev.score = chosen.score;
      ev.absorbed_b = std::move(outcome.absorbed_b);
      events.push_back(std::move(ev));
    }
    merges_done_ += 1;
    if (!tracking()) {
      // Budget spent: release all history.
      for (auto& state : banks_) state.averages.clear();
    }
  }
  return events;
}

const RunningAverage* MergeEngine::average(ProjType type, int group_id) const {
  for (const auto& state : banks_)
    if (state.type == type) return state.find(group_id);
  return nullptr;
}

std::vector<AverageSnapshot> MergeEngine::snapshot_averages() const {
  std::vector<AverageSnapshot> out;
  for (const auto& state : banks_) {
    for (const auto& [id, avg] : state.averages) {
      AverageSnapshot snap;
      snap.type = state.type;
      snap.group_id = id;
      snap.count = avg.count;
      snap.mean = avg.mean.clone();
      out.push_back(std::move(snap));
    }
  }
  return out;
}

void MergeEngine::restore(int merges_done, const std::vector<AverageSnapshot>& averages) {
  if (merges_done < 0 || merges_done > sched_.budget)
    throw ContractError("merge engine restore: merges_done out of range");
  merges_done_ = merges_done;
  for (auto& state : banks_) state.averages.clear();
  if (!tracking()) {
    if (!averages.empty())
      throw ContractError("merge engine restore: averages given but budget is spent");
    return;
  }
  for (const auto& snap : averages) {
    for (auto& state : banks_) {
      if (state.type != snap.type) continue;
      RunningAverage avg;
      avg.mean = snap.mean.clone();
      avg.count = snap.count;
      state.averages.emplace_back(snap.group_id, std::move(avg));
    }
  }
}

} // namespace aslora
