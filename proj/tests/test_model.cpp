#include "aslora/model.hpp"

#include "aslora/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

using namespace aslora;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  cfg.vocab_size = 10;
  cfg.max_seq_len = 6;
  return cfg;
}

AdapterConfig tiny_adapters(ShareMode mode = ShareMode::aslora) {
  AdapterConfig a;
  a.mode = mode;
  a.rank = 2;
  a.alpha = 4.0;
  return a;
}

std::vector<int> tokens_for(int batch, int seq, uint64_t seed) {
  RandomStream rng(seed);
  std::vector<int> out;
  for (int i = 0; i < batch * seq; ++i)
    out.push_back(static_cast<int>(rng.uniform_int(10)));
  return out;
}

bool bits_equal(const std::vector<real>& a, const std::vector<real>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0;
}

} // namespace

TEST_CASE("forward shapes for both head kinds") {
  TransformerModel clf(tiny_cfg(), tiny_adapters(), 1);
  auto toks = tokens_for(3, 4, 2);
  Tensor logits = clf.forward(toks, 3, 4);
  CHECK(logits.shape() == Shape{3, 2});

  ModelConfig rcfg = tiny_cfg();
  rcfg.head = HeadKind::regression;
  TransformerModel reg(rcfg, std::nullopt, 1);
  Tensor pred = reg.forward(toks, 3, 4);
  CHECK(pred.shape() == Shape{3});
}

TEST_CASE("same seed builds bit-identical models") {
  TransformerModel m1(tiny_cfg(), tiny_adapters(), 7);
  TransformerModel m2(tiny_cfg(), tiny_adapters(), 7);
  auto toks = tokens_for(2, 5, 3);
  CHECK(bits_equal(m1.forward(toks, 2, 5).values(), m2.forward(toks, 2, 5).values()));
  CHECK(m1.base_weights_hash() == m2.base_weights_hash());

  TransformerModel m3(tiny_cfg(), tiny_adapters(), 8);
  CHECK(m3.base_weights_hash() != m1.base_weights_hash());
}

TEST_CASE("rows of a batch match the same rows run alone, bit for bit") {
  TransformerModel model(tiny_cfg(), tiny_adapters(), 11);
  // Non-zero B so the adapter path participates.
  for (ProjType t : {ProjType::query, ProjType::value}) {
    RandomStream rng(40 + static_cast<uint64_t>(t));
    for (const auto& g : model.bank(t).groups()) {
      Tensor b = g.b;
      for (auto& v : b.values()) v = static_cast<real>(rng.normal() * 0.1);
    }
  }

  const int seq = 4;
  auto toks = tokens_for(3, seq, 17);
  Tensor batched = model.forward(toks, 3, seq);
  for (int row = 0; row < 3; ++row) {
    std::vector<int> one(toks.begin() + row * seq, toks.begin() + (row + 1) * seq);
    Tensor single = model.forward(one, 1, seq);
    CHECK(std::memcmp(single.data(), batched.data() + row * 2, 2 * sizeof(real)) == 0);
  }
}

TEST_CASE("zero-initialized adapters leave the network output untouched") {
  auto toks = tokens_for(2, 6, 5);
  TransformerModel plain(tiny_cfg(), std::nullopt, 21);
  Tensor base_out = plain.forward(toks, 2, 6);

  for (ShareMode mode : {ShareMode::lora, ShareMode::shared_a,
                         ShareMode::fixed_share, ShareMode::aslora}) {
    TransformerModel adapted(tiny_cfg(), tiny_adapters(mode), 21);
    Tensor out = adapted.forward(toks, 2, 6);
    CHECK(bits_equal(out.values(), base_out.values()));
  }
}

TEST_CASE("nonzero adapters change the output") {
  auto toks = tokens_for(2, 4, 6);
  TransformerModel plain(tiny_cfg(), std::nullopt, 22);
  TransformerModel adapted(tiny_cfg(), tiny_adapters(), 22);
  Tensor b = adapted.bank(ProjType::query).group(0).b;
  b.values()[0] = real(0.5);
  CHECK_FALSE(bits_equal(adapted.forward(toks, 2, 4).values(),
                         plain.forward(toks, 2, 4).values()));
}

TEST_CASE("adapter seeds do not perturb the frozen base") {
  TransformerModel plain(tiny_cfg(), std::nullopt, 30);
  for (ShareMode mode : {ShareMode::lora, ShareMode::shared_a, ShareMode::aslora}) {
    TransformerModel adapted(tiny_cfg(), tiny_adapters(mode), 30);
    CHECK(adapted.base_weights_hash() == plain.base_weights_hash());
  }
}

TEST_CASE("backward reaches only trainable tensors; base hash is stable") {
  TransformerModel model(tiny_cfg(), tiny_adapters(), 13);
  const uint64_t hash_before = model.base_weights_hash();
  auto toks = tokens_for(2, 4, 14);

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = cross_entropy(model.forward(toks, 2, 4), {0, 1});
    tape.backward(loss);
  }

  int with_grad = 0;
  for (const auto& [name, t] : model.named_tensors()) {
    if (name.rfind("base.", 0) == 0) {
      CHECK_FALSE(t.requires_grad());
      CHECK_FALSE(t.has_grad());
    } else if (t.has_grad()) {
      ++with_grad;
    }
  }
  // A, head.w and head.b always receive gradient. B factors do too: their
  // grad is A x^T-shaped and generally nonzero even while B itself is zero.
  CHECK(with_grad == static_cast<int>(model.trainable_parameters().size()));
  CHECK(model.base_weights_hash() == hash_before);
}

TEST_CASE("trainable parameter lists are stable, named, and unique") {
  TransformerModel model(tiny_cfg(), tiny_adapters(), 2);
  auto named = model.named_trainable_parameters();
  // Per bank: one shared A and L=2 group factors; plus the two head tensors.
  CHECK(named.size() == 2 * (1 + 2) + 2);
  CHECK(named.front().first == "adapter.query.A");
  CHECK(named[1].first == "adapter.query.B.g0");
  CHECK(named[3].first == "adapter.value.A");
  CHECK(named[named.size() - 2].first == "head.w");
  CHECK(named.back().first == "head.b");
  for (const auto& [name, t] : named) CHECK(t.requires_grad());

  std::set<std::string> all_names;
  for (const auto& [name, t] : model.named_tensors())
    CHECK(all_names.insert(name).second); // no duplicates
  // 2 embeddings + 12 tensors per layer + final norm pair + trainables.
  CHECK(all_names.size() == 2 + 12 * 2 + 2 + named.size());

  model.bank(ProjType::query).merge_groups(0, 1);
  CHECK(model.named_trainable_parameters().size() == named.size() - 1);

  TransformerModel query_only = [] {
    AdapterConfig a = tiny_adapters();
    a.targets = {ProjType::query};
    return TransformerModel(tiny_cfg(), a, 2);
  }();
  CHECK(query_only.has_bank(ProjType::query));
  CHECK_FALSE(query_only.has_bank(ProjType::value));
  CHECK_THROWS_AS(query_only.bank(ProjType::value), ContractError);
  CHECK(query_only.named_trainable_parameters().size() == (1 + 2) + 2);
}

TEST_CASE("merged layers share one effective weight update") {
  TransformerModel model(tiny_cfg(), tiny_adapters(), 19);
  AdapterBank& bank = model.bank(ProjType::value);
  Tensor b = bank.group(1).b;
  RandomStream rng(77);
  for (auto& v : b.values()) v = static_cast<real>(rng.normal());
  bank.merge_groups(0, 1);

  Tensor d0 = bank.delta_weight(0);
  Tensor d1 = bank.delta_weight(1);
  CHECK(bits_equal(d0.values(), d1.values()));
}

TEST_CASE("input contracts") {
  TransformerModel model(tiny_cfg(), std::nullopt, 1);
  auto toks = tokens_for(1, 6, 1);
  CHECK_THROWS_AS(model.forward(tokens_for(1, 7, 1), 1, 7), InputError);
  CHECK_THROWS_AS(model.forward(toks, 2, 6), ShapeError);
  CHECK_THROWS_AS(model.forward(std::vector<int>{0, 1, 99}, 1, 3), InputError);
  CHECK_THROWS_AS(model.forward(std::vector<int>{0, -1, 2}, 1, 3), InputError);
}

TEST_CASE("model config validation") {
  ModelConfig cfg = tiny_cfg();
  cfg.num_heads = 3; // does not divide model_dim 8
  CHECK_THROWS_AS(TransformerModel(cfg, std::nullopt, 1), ConfigError);

  cfg = tiny_cfg();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(TransformerModel(cfg, std::nullopt, 1), ConfigError);

  cfg = tiny_cfg();
  cfg.num_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  // Regression ignores num_classes entirely.
  cfg = tiny_cfg();
  cfg.head = HeadKind::regression;
  cfg.num_classes = 1;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("short sequences use a prefix of the position table") {
  TransformerModel model(tiny_cfg(), std::nullopt, 9);
  auto toks = tokens_for(2, 3, 10);
  Tensor out = model.forward(toks, 2, 3);
  CHECK(out.shape() == Shape{2, 2});
  for (real v : out.values()) CHECK(std::isfinite(static_cast<double>(v)));
}
