// Full-model gradient verification, built in double precision only.
//
// Two checks, both on a small 2-layer encoder:
//   1. every trainable parameter's tape gradient matches central differences
//   2. after a merge, the shared B factor's gradient equals the sum of the
//      gradients the two singleton factors received before the merge
//
// Exits 0 when both pass; the acceptance binary runs this as a subprocess.

#include "aslora/model.hpp"
#include "aslora/ops.hpp"
#include "aslora/rng.hpp"

#include "fd_check.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

using namespace aslora;

namespace {

ModelConfig micro_model() {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.model_dim = 16;
  cfg.num_heads = 2;
  cfg.ffn_dim = 24;
  cfg.vocab_size = 12;
  cfg.max_seq_len = 5;
  return cfg;
}

AdapterConfig micro_adapters() {
  AdapterConfig a;
  a.mode = ShareMode::aslora;
  a.rank = 4;
  a.alpha = 8.0;
  return a;
}

struct FixedBatch {
  std::vector<int> tokens;
  std::vector<int> labels;
  int batch = 3;
  int seq = 5;
};

FixedBatch fixed_batch() {
  FixedBatch b;
  RandomStream rng(2024);
  for (int i = 0; i < b.batch * b.seq; ++i)
    b.tokens.push_back(static_cast<int>(rng.uniform_int(12)));
  b.labels = {0, 1, 0};
  return b;
}

// Nonzero adapters; zero B would hide the A gradient entirely.
void warm_adapters(TransformerModel& model, uint64_t seed) {
  RandomStream rng(seed);
  for (ProjType t : {ProjType::query, ProjType::value})
    for (const auto& g : model.bank(t).groups()) {
      Tensor b = g.b;
      for (auto& v : b.values()) v = static_cast<real>(rng.normal() * 0.05);
    }
}

bool check_full_model() {
  TransformerModel model(micro_model(), micro_adapters(), 31);
  warm_adapters(model, 90);
  const FixedBatch batch = fixed_batch();

  auto loss_fn = [&] {
    return cross_entropy(model.forward(batch.tokens, batch.batch, batch.seq),
                         batch.labels);
  };
  const double h = 1e-3;
  const double tol = 1e-4;
  const testing::FdReport report =
      testing::fd_check(loss_fn, model.named_trainable_parameters(), h);

  const bool ok = report.max_rel_err < tol;
  std::printf("full-model finite differences: %lld elements, max_rel_err=%.3e "
              "(tol %.0e) %s\n",
              static_cast<long long>(report.checked), report.max_rel_err, tol,
              ok ? "PASS" : "FAIL");
  if (!ok) std::printf("  worst: %s\n", report.worst.c_str());
  return ok;
}

bool check_merged_gradient_additivity() {
  const FixedBatch batch = fixed_batch();

  // Both models share every weight; the only difference is whether layers 0
  // and 1 read their (identical) value-side B from one buffer or two.
  TransformerModel split_model(micro_model(), micro_adapters(), 31);
  TransformerModel merged_model(micro_model(), micro_adapters(), 31);
  warm_adapters(split_model, 90);
  warm_adapters(merged_model, 90);

  AdapterBank& split_bank = split_model.bank(ProjType::value);
  AdapterBank& merged_bank = merged_model.bank(ProjType::value);
  {
    // Give both groups the same B in both models, then fuse one model's pair.
    const std::vector<real> shared_b = split_bank.group(1).b.values();
    Tensor b0 = split_bank.group(0).b;
    b0.values() = shared_b;
    Tensor m0 = merged_bank.group(0).b;
    m0.values() = shared_b;
    Tensor m1 = merged_bank.group(1).b;
    m1.values() = shared_b;
    merged_bank.merge_groups(0, 1);
  }

  auto backward_loss = [&](TransformerModel& model) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss =
        cross_entropy(model.forward(batch.tokens, batch.batch, batch.seq),
                      batch.labels);
    tape.backward(loss);
    return static_cast<double>(loss.item());
  };
  const double split_loss = backward_loss(split_model);
  const double merged_loss = backward_loss(merged_model);

  const std::vector<real>& g0 = split_bank.group(0).b.grad();
  const std::vector<real>& g1 = split_bank.group(1).b.grad();
  const std::vector<real>& gm = merged_bank.group(1).b.grad();

  double max_err = testing::rel_err(split_loss, merged_loss);
  for (size_t i = 0; i < gm.size(); ++i) {
    const double want = static_cast<double>(g0[i]) + static_cast<double>(g1[i]);
    max_err = std::max(max_err, testing::rel_err(want, static_cast<double>(gm[i])));
  }
  const double tol = 1e-5;
  const bool ok = max_err < tol;
  std::printf("merged-gradient additivity: %zu elements, max_rel_err=%.3e "
              "(tol %.0e) %s\n",
              gm.size(), max_err, tol, ok ? "PASS" : "FAIL");
  return ok;
}

} // namespace

int main() {
  static_assert(sizeof(real) == 8, "gradient verification runs in the double build");
  const bool a = check_full_model();
  const bool b = check_merged_gradient_additivity();
  return a && b ? 0 : 1;
}
