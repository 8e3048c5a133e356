// Times the serial gemm driver against the OpenMP driver at shapes the
// training loop actually hits, and confirms their outputs agree bitwise.
// Run manually: build/bench/bench_kernels [reps]

#include "aslora/kernels.hpp"
#include "aslora/rng.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

using namespace aslora;

namespace {

double time_gemm(bool trans_a, bool trans_b, int m, int n, int k,
                 const real* a, const real* b, real* c, int reps,
                 kernels::Backend backend) {
  kernels::set_backend(backend);
  // Warm-up pass also primes caches.
  kernels::gemm(trans_a, trans_b, m, n, k, a, b, c);
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) kernels::gemm(trans_a, trans_b, m, n, k, a, b, c);
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / reps;
}

} // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::stoi(argv[1]) : 200;
  std::printf("threads available: %d (OpenMP %s)\n", kernels::max_threads(),
              kernels::openmp_compiled() ? "compiled in" : "not compiled");
  std::printf("%-28s %12s %12s %9s %8s\n", "shape", "serial GF/s", "openmp GF/s",
              "speedup", "bitwise");

  struct Case {
    const char* name;
    bool ta, tb;
    int m, n, k;
  };
  // m=128 matches a desk batch of 8 sequences of length 16.
  const Case cases[] = {
      {"fwd   128x64x64", false, true, 128, 64, 64},
      {"fwd   128x128x64", false, true, 128, 128, 64},
      {"bwd_w 64x64x128", true, false, 64, 64, 128},
      {"bwd_x 128x64x64", false, false, 128, 64, 64},
      {"big   512x256x256", false, false, 512, 256, 256},
  };

  RandomStream rng(7);
  for (const Case& cs : cases) {
    const size_t an = static_cast<size_t>(cs.m) * cs.k;
    const size_t bn = static_cast<size_t>(cs.k) * cs.n;
    const size_t cn = static_cast<size_t>(cs.m) * cs.n;
    std::vector<real> a(an), b(bn), c_serial(cn), c_omp(cn);
    for (auto& v : a) v = static_cast<real>(rng.normal());
    for (auto& v : b) v = static_cast<real>(rng.normal());

    const double ts = time_gemm(cs.ta, cs.tb, cs.m, cs.n, cs.k, a.data(), b.data(),
                                c_serial.data(), reps, kernels::Backend::serial);
    const double tp = time_gemm(cs.ta, cs.tb, cs.m, cs.n, cs.k, a.data(), b.data(),
                                c_omp.data(), reps, kernels::Backend::openmp);
    const double flops = 2.0 * cs.m * cs.n * cs.k;
    const bool same = std::memcmp(c_serial.data(), c_omp.data(), cn * sizeof(real)) == 0;
    std::printf("%-28s %12.2f %12.2f %8.2fx %8s\n", cs.name, flops / ts / 1e9,
                flops / tp / 1e9, ts / tp, same ? "equal" : "DIFFER");
    if (!same) return 1;
  }
  return 0;
}
