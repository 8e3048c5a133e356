#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace aslora {

/// Deterministic xoshiro256** stream with hand-rolled float/normal draws.
///
/// std::mt19937 plus the standard <random> distributions are avoided on
/// purpose: distribution output is implementation-defined, and sequences
/// here must be reproducible bit-for-bit across compilers and platforms.
class RandomStream {
public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(uint64_t seed);

  /// Next raw 64-bit word.
  uint64_t next_u64();

  /// Uniform in [0,1) with 53 random bits.
  double uniform();

  /// Uniform in [lo,hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0,n). Pre: n > 0. Uses rejection to stay unbiased.
  uint64_t uniform_int(uint64_t n);

  /// Standard normal via Box-Muller; caches the spare draw.
  double normal();

  double normal(double mean, double stddev);

  /// Serializable state: 4 xoshiro words plus the cached spare.
  struct State {
    std::array<uint64_t, 4> s;
    bool has_spare;
    double spare;
  };
  State state() const;
  void set_state(const State& st);

private:
  std::array<uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent child seed from a parent seed and a stream tag.
/// Equal (seed, tag) pairs always map to the same child; distinct tags give
/// decorrelated streams, so e.g. base weights never depend on whether
/// adapter streams were consumed.
uint64_t derive_seed(uint64_t seed, const std::string& tag);

} // namespace aslora
