#include "aslora/task.hpp"

#include "aslora/rng.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace aslora {
namespace {

// Token ids below the reserve are marker tokens; background draws avoid them.
int marker_reserve(const TaskSpec& spec) {
  switch (spec.kind) {
  case TaskKind::copy_class: return 2;
  case TaskKind::layerwise_probe: return spec.probe_depth + 1;
  case TaskKind::seq_regression: return 0;
  }
  return 0;
}

uint64_t token_key(const std::vector<int>& tokens) {
  return fnv1a64(tokens.data(), tokens.size() * sizeof(int));
}

int background_token(RandomStream& rng, int reserve, int vocab) {
  return reserve + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab - reserve)));
}

// k distinct ascending positions out of [0, seq).
std::vector<int> draw_positions(RandomStream& rng, int seq, int k) {
  std::vector<int> all(static_cast<size_t>(seq));
  for (int i = 0; i < seq; ++i) all[static_cast<size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(seq - i)));
    std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
  }
  std::vector<int> pos(all.begin(), all.begin() + k);
  std::sort(pos.begin(), pos.end());
  return pos;
}

Example draw_example(const TaskSpec& spec, int vocab, int label, RandomStream& rng,
                     const std::vector<real>& reg_weights) {
  const int reserve = marker_reserve(spec);
  Example ex;
  ex.tokens.resize(static_cast<size_t>(spec.seq_len));
  for (auto& t : ex.tokens) t = background_token(rng, reserve, vocab);

  switch (spec.kind) {
  case TaskKind::copy_class: {
    ex.label = label;
    if (label == 1) {
      const int p = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.seq_len)));
      ex.tokens[static_cast<size_t>(p)] = 1;
    }
    break;
  }
  case TaskKind::layerwise_probe: {
    ex.label = label;
    const int k = spec.probe_depth;
    if (k == 1) {
      // Depth 1 degenerates to marker presence.
      if (label == 1) {
        const int p = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.seq_len)));
        ex.tokens[static_cast<size_t>(p)] = 1;
      }
      break;
    }
    const std::vector<int> pos = draw_positions(rng, spec.seq_len, k);
    std::vector<int> order(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) order[static_cast<size_t>(i)] = i;
    if (label == 0) {
      // Any non-identity placement breaks the ascending chain, because each
      // marker occurs exactly once.
      do {
        for (int i = k - 1; i > 0; --i) {
          const int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i + 1)));
          std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
      } while (std::is_sorted(order.begin(), order.end()));
    }
    for (int i = 0; i < k; ++i)
      ex.tokens[static_cast<size_t>(pos[static_cast<size_t>(i)])] =
          1 + order[static_cast<size_t>(i)];
    break;
  }
  case TaskKind::seq_regression: {
    double acc = 0.0;
    for (int t : ex.tokens) acc += reg_weights[static_cast<size_t>(t)];
    ex.target = static_cast<real>(acc / spec.seq_len);
    break;
  }
  }
  return ex;
}

} // namespace

const char* task_kind_name(TaskKind k) {
  switch (k) {
  case TaskKind::copy_class: return "copy_class";
  case TaskKind::layerwise_probe: return "layerwise_probe";
  case TaskKind::seq_regression: return "seq_regression";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "copy_class") return TaskKind::copy_class;
  if (name == "layerwise_probe") return TaskKind::layerwise_probe;
  if (name == "seq_regression") return TaskKind::seq_regression;
  throw ConfigError("unknown task kind '" + name + "'");
}

void TaskSpec::validate(int vocab_size) const {
  if (seq_len <= 0) throw ConfigError("task_seq_len: must be positive");
  if (num_train <= 0) throw ConfigError("num_train: must be positive");
  if (num_eval <= 0) throw ConfigError("num_eval: must be positive");
  if (noise_rate < 0.0 || (classification() && noise_rate > 1.0))
    throw ConfigError("noise_rate: out of range");
  if (kind == TaskKind::layerwise_probe) {
    if (probe_depth < 1) throw ConfigError("probe_depth: must be at least 1");
    if (probe_depth > seq_len)
      throw ConfigError("probe_depth: cannot exceed task_seq_len");
  }
  const TaskSpec& self = *this;
  if (vocab_size <= marker_reserve(self) + 1)
    throw ConfigError("vocab_size: too small for the task's marker tokens");
}

TaskData generate_task(const TaskSpec& spec, int vocab_size) {
  spec.validate(vocab_size);
  RandomStream rng(derive_seed(spec.seed, "task"));

  std::vector<real> reg_weights;
  if (spec.kind == TaskKind::seq_regression) {
    RandomStream wrng(derive_seed(spec.seed, "task.weights"));
    reg_weights.resize(static_cast<size_t>(vocab_size));
    for (auto& w : reg_weights) w = static_cast<real>(wrng.uniform(-1.0, 1.0));
  }

  TaskData data;
  data.train.classification = data.eval.classification = spec.classification();
  data.train.seq_len = data.eval.seq_len = spec.seq_len;

  std::unordered_set<uint64_t> seen;
  auto fill = [&](Dataset& ds, int count) {
    for (int i = 0; i < count; ++i) {
      const int label = i % 2; // balanced within one example per split
      Example ex;
      int attempts = 0;
      do {
        if (++attempts > 1000)
          throw ContractError("generate_task: could not draw a fresh example; "
                              "task space too small for requested sizes");
        ex = draw_example(spec, vocab_size, label, rng, reg_weights);
      } while (!seen.insert(token_key(ex.tokens)).second);
      if (spec.noise_rate > 0.0) {
        if (spec.classification()) {
          if (rng.uniform() < spec.noise_rate) ex.label ^= 1;
        } else {
          ex.target += static_cast<real>(rng.normal(0.0, spec.noise_rate));
        }
      }
      ds.examples.push_back(std::move(ex));
    }
  };
  fill(data.train, spec.num_train);
  fill(data.eval, spec.num_eval);
  return data;
}

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw ContractError("make_batch: empty index list");
  Batch b;
  b.batch = static_cast<int>(indices.size());
  b.seq = ds.seq_len;
  b.tokens.reserve(indices.size() * static_cast<size_t>(ds.seq_len));
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= ds.size())
      throw ContractError("make_batch: index out of range");
    const Example& ex = ds.examples[static_cast<size_t>(idx)];
    b.tokens.insert(b.tokens.end(), ex.tokens.begin(), ex.tokens.end());
    if (ds.classification)
      b.labels.push_back(ex.label);
    else
      b.targets.push_back(ex.target);
  }
  return b;
}

EvalResult evaluate(TransformerModel& model, const Dataset& ds, int batch_size) {
  if (ds.examples.empty()) throw ContractError("evaluate: empty dataset");
  if (batch_size <= 0) throw ContractError("evaluate: batch_size must be positive");

  EvalResult res;
  res.classification = ds.classification;
  res.total = ds.size();
  double loss_acc = 0.0;
  int64_t correct = 0;

  for (int64_t start = 0; start < ds.size(); start += batch_size) {
    const int64_t stop = std::min(ds.size(), start + batch_size);
    std::vector<int64_t> idx;
    for (int64_t i = start; i < stop; ++i) idx.push_back(i);
    Batch b = make_batch(ds, idx);
    Tensor out = model.forward(b.tokens, b.batch, b.seq); // no tape: evaluation only

    if (ds.classification) {
      const int c = out.dim(1);
      for (int r = 0; r < b.batch; ++r) {
        const real* row = out.data() + static_cast<size_t>(r) * c;
        int arg = 0;
        for (int j = 1; j < c; ++j)
          if (row[j] > row[arg]) arg = j;
        if (arg == b.labels[static_cast<size_t>(r)]) ++correct;
      }
      loss_acc += static_cast<double>(cross_entropy(out, b.labels).item()) * b.batch;
    } else {
      for (int r = 0; r < b.batch; ++r) {
        const double d = static_cast<double>(out.data()[r]) - b.targets[static_cast<size_t>(r)];
        loss_acc += d * d;
      }
    }
  }
  res.loss = loss_acc / static_cast<double>(res.total);
  res.accuracy = ds.classification
                     ? static_cast<double>(correct) / static_cast<double>(res.total)
                     : 0.0;
  return res;
}

} // namespace aslora
