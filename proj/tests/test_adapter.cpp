#include "aslora/adapter.hpp"

#include "aslora/ops.hpp"
#include "aslora/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace aslora;

namespace {

AdapterConfig make_cfg(ShareMode mode, int rank = 8, int fixed_n = 3) {
  AdapterConfig cfg;
  cfg.mode = mode;
  cfg.rank = rank;
  cfg.fixed_group_size = fixed_n;
  return cfg;
}

void fill_random(Tensor t, uint64_t seed) {
  RandomStream rng(seed);
  for (auto& v : t.values()) v = static_cast<real>(rng.normal());
}

} // namespace

TEST_CASE("parameter counts reproduce the reference arithmetic") {
  // 12-layer encoder width 768, rank 8, adapters on two projection types.
  CHECK(trainable_param_count(make_cfg(ShareMode::lora), 12, 768) == 294912);
  CHECK(trainable_param_count(make_cfg(ShareMode::aslora), 12, 768, 7) == 73728);
  CHECK(trainable_param_count(make_cfg(ShareMode::shared_a), 12, 768) ==
        (1 + 12) * 768 * 8 * 2);

  // 32-layer decoder width 4096, rank 64.
  CHECK(trainable_param_count(make_cfg(ShareMode::lora, 64), 32, 4096) == 33554432);
  CHECK(trainable_param_count(make_cfg(ShareMode::aslora, 64), 32, 4096, 16) == 8912896);

  // One adapted type halves the two-type count.
  AdapterConfig single = make_cfg(ShareMode::lora);
  single.targets = {ProjType::query};
  CHECK(trainable_param_count(single, 12, 768) == 147456);
}

TEST_CASE("fixed blocks of size n match a budget of L - ceil(L/n) merges") {
  const int pairs[][2] = {{2, 6}, {3, 8}, {6, 10}};
  for (const auto& [n, budget] : pairs) {
    AdapterConfig fixed = make_cfg(ShareMode::fixed_share, 8, n);
    AdapterConfig adaptive = make_cfg(ShareMode::aslora);
    CHECK(trainable_param_count(fixed, 12, 768) ==
          trainable_param_count(adaptive, 12, 768, budget));
  }
}

TEST_CASE("parameter count contract errors") {
  CHECK_THROWS_AS(trainable_param_count(make_cfg(ShareMode::lora), 12, 768, 1),
                  ContractError);
  CHECK_THROWS_AS(trainable_param_count(make_cfg(ShareMode::aslora), 12, 768, 12),
                  ContractError);
  CHECK_THROWS_AS(trainable_param_count(make_cfg(ShareMode::aslora), 0, 768),
                  ConfigError);
}

TEST_CASE("adapter config validation") {
  AdapterConfig cfg;
  cfg.rank = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdapterConfig{};
  cfg.alpha = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdapterConfig{};
  cfg.targets = {ProjType::query, ProjType::query};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdapterConfig{};
  cfg.targets.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = AdapterConfig{};
  cfg.rank = 16;
  CHECK(cfg.resolved_a_std() == doctest::Approx(0.25));
}

TEST_CASE("bank initialization: Gaussian A, zero B, zero increment") {
  AdapterBank bank(make_cfg(ShareMode::aslora), 4, 16, 99);
  CHECK(bank.live_groups() == 4);
  double a_norm = 0;
  for (real v : bank.a_for_layer(0).values()) a_norm += std::fabs(v);
  CHECK(a_norm > 0);
  CHECK(&bank.a_for_layer(0) == &bank.a_for_layer(3)); // shared object

  for (const auto& g : bank.groups()) {
    CHECK(g.members == std::vector<int>{g.id});
    for (real v : g.b.values()) CHECK(v == real(0));
  }

  Tensor x = Tensor::zeros({3, 16});
  fill_random(x, 5);
  Tensor inc = bank.forward(1, x);
  CHECK(inc.shape() == Shape{3, 16});
  for (real v : inc.values()) CHECK(v == real(0));
}

TEST_CASE("lora mode holds one A per layer") {
  AdapterBank bank(make_cfg(ShareMode::lora), 3, 8, 1);
  CHECK(&bank.a_for_layer(0) != &bank.a_for_layer(1));
  CHECK(bank.named_params().size() == 3 + 3); // A.0..A.2 and three B groups
  CHECK_THROWS_AS(bank.merge_groups(0, 1), ContractError);
}

TEST_CASE("fixed_share partitions layers into contiguous blocks") {
  AdapterBank bank(make_cfg(ShareMode::fixed_share, 8, 3), 8, 8, 2);
  CHECK(bank.live_groups() == 3); // ceil(8/3)
  CHECK(bank.group(0).members == std::vector<int>{0, 1, 2});
  CHECK(bank.group(2).members == std::vector<int>{6, 7});
  CHECK(bank.group_id_of(5) == 1);

  // Uneven split: 7 layers in blocks of 2 ends with a singleton.
  AdapterBank odd(make_cfg(ShareMode::fixed_share, 8, 2), 7, 8, 2);
  CHECK(odd.live_groups() == 4);
  CHECK(odd.group(3).members == std::vector<int>{6});
}

TEST_CASE("layers of one group compute bit-identical increments") {
  AdapterBank bank(make_cfg(ShareMode::fixed_share, 4, 2), 4, 8, 7);
  fill_random(bank.group(0).b, 11);
  Tensor x = Tensor::zeros({2, 8});
  fill_random(x, 12);
  Tensor inc0 = bank.forward(0, x);
  Tensor inc1 = bank.forward(1, x);
  CHECK(std::memcmp(inc0.data(), inc1.data(),
                    inc0.values().size() * sizeof(real)) == 0);
}

TEST_CASE("increment scales linearly in alpha") {
  AdapterConfig cfg = make_cfg(ShareMode::shared_a, 4);
  cfg.alpha = 8.0;
  AdapterBank bank_lo(cfg, 2, 8, 3);
  cfg.alpha = 16.0;
  AdapterBank bank_hi(cfg, 2, 8, 3); // same seed: same A
  fill_random(bank_lo.group(0).b, 4);
  Tensor b_hi = bank_hi.group(0).b;
  b_hi.values() = bank_lo.group(0).b.values();

  Tensor x = Tensor::zeros({2, 8});
  fill_random(x, 5);
  Tensor lo = bank_lo.forward(0, x);
  Tensor hi = bank_hi.forward(0, x);
  for (size_t i = 0; i < lo.values().size(); ++i)
    CHECK(hi.values()[i] == real(2) * lo.values()[i]); // exact: power-of-two gain
}

TEST_CASE("merge keeps the upper group's B bit for bit") {
  AdapterBank bank(make_cfg(ShareMode::aslora, 4), 6, 8, 42);
  for (const auto& g : bank.groups()) fill_random(g.b, 100 + static_cast<uint64_t>(g.id));

  const std::vector<real> upper_bits = bank.group(4).b.values();
  const TensorImpl* upper_impl = bank.group(4).b.impl();

  MergeOutcome out = bank.merge_groups(1, 4);
  CHECK(out.survivor_id == 4);
  CHECK(out.absorbed_id == 1);
  CHECK(out.survivor_members == std::vector<int>{4});
  CHECK(out.absorbed_members == std::vector<int>{1});

  CHECK(bank.live_groups() == 5);
  CHECK(bank.group(4).members == std::vector<int>{1, 4});
  CHECK(bank.group(4).representative() == 4);
  CHECK(bank.group(4).b.impl() == upper_impl);
  CHECK(bank.group(4).b.values() == upper_bits);
  CHECK(bank.group_id_of(1) == 4);
  CHECK(bank.assignment() == std::vector<int>{0, 4, 2, 3, 4, 5});
  CHECK(out.absorbed_b.defined());

  // Chained merge keeps ids stable and members sorted.
  MergeOutcome out2 = bank.merge_groups(4, 5);
  CHECK(out2.absorbed_members == std::vector<int>{1, 4});
  CHECK(bank.group(5).members == std::vector<int>{1, 4, 5});
  CHECK_THROWS_AS(bank.group(1), ContractError);
}

TEST_CASE("merge orientation and identity are enforced") {
  AdapterBank bank(make_cfg(ShareMode::aslora, 4), 4, 8, 1);
  CHECK_THROWS_AS(bank.merge_groups(2, 2), ContractError);
  CHECK_THROWS_AS(bank.merge_groups(3, 1), ContractError); // wrong orientation
  CHECK_THROWS_AS(bank.merge_groups(0, 9), ContractError); // not live
}

TEST_CASE("delta_weight equals gain times B A and matches group members") {
  AdapterConfig cfg = make_cfg(ShareMode::aslora, 2);
  cfg.alpha = 4.0; // gain 2
  AdapterBank bank(cfg, 3, 4, 6);
  fill_random(bank.group(0).b, 3);
  fill_random(bank.group(2).b, 4);
  bank.merge_groups(0, 2);

  Tensor dw0 = bank.delta_weight(0);
  Tensor dw2 = bank.delta_weight(2);
  CHECK(dw0.shape() == Shape{4, 4});
  CHECK(std::memcmp(dw0.data(), dw2.data(), dw0.values().size() * sizeof(real)) == 0);

  Tensor manual = matmul(bank.group(2).b, bank.a_for_layer(0));
  for (size_t i = 0; i < manual.values().size(); ++i)
    CHECK(dw0.values()[i] == doctest::Approx(2.0 * manual.values()[i]));
}

TEST_CASE("named params track merges") {
  AdapterBank bank(make_cfg(ShareMode::aslora, 4), 3, 8, 5);
  auto names_of = [&] {
    std::vector<std::string> names;
    for (auto& [n, t] : bank.named_params()) names.push_back(n);
    return names;
  };
  CHECK(names_of() == std::vector<std::string>{"A", "B.g0", "B.g1", "B.g2"});
  bank.merge_groups(0, 2);
  CHECK(names_of() == std::vector<std::string>{"A", "B.g1", "B.g2"});
}

TEST_CASE("restore_assignment rebuilds the exact group structure") {
  AdapterBank bank(make_cfg(ShareMode::aslora, 4), 6, 8, 13);
  bank.merge_groups(2, 4);
  bank.merge_groups(1, 4);
  const auto saved = bank.assignment();

  AdapterBank fresh(make_cfg(ShareMode::aslora, 4), 6, 8, 13);
  fresh.restore_assignment(saved);
  CHECK(fresh.assignment() == saved);
  CHECK(fresh.live_groups() == bank.live_groups());
  CHECK(fresh.group(4).members == bank.group(4).members);
  CHECK(fresh.group(4).representative() == 4);

  CHECK_THROWS_AS(fresh.restore_assignment(std::vector<int>{0, 1}), ContractError);
}
