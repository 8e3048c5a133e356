#include "aslora/rng.hpp"

#include "aslora/common.hpp"

#include <cmath>

namespace aslora {
namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

} // namespace

RandomStream::RandomStream(uint64_t seed) {
  // splitmix64 expansion guards against weak all-zero / low-entropy states.
  uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

uint64_t RandomStream::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

uint64_t RandomStream::uniform_int(uint64_t n) {
  if (n == 0) throw ContractError("uniform_int: n must be positive");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double RandomStream::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

RandomStream::State RandomStream::state() const {
  return State{s_, has_spare_, spare_};
}

void RandomStream::set_state(const State& st) {
  s_ = st.s;
  has_spare_ = st.has_spare;
  spare_ = st.spare;
}

uint64_t derive_seed(uint64_t seed, const std::string& tag) {
  uint64_t h = fnv1a64(tag);
  h = fnv1a64(&seed, sizeof(seed), h);
  // One extra mix so adjacent tags do not land in adjacent states.
  uint64_t x = h;
  return splitmix64(x);
}

} // namespace aslora
