#include "aslora/kernels.hpp"

#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#if defined(__GNUC__) || defined(__clang__)
#define ASLORA_NOINLINE __attribute__((noinline))
#else
#define ASLORA_NOINLINE
#endif

namespace aslora::kernels {
namespace {

void check_args(int m, int n, int k, const real* a, const real* b, real* c) {
  if (m <= 0 || n <= 0 || k <= 0)
    throw ContractError("gemm: dimensions must be positive");
  if (a == nullptr || b == nullptr || c == nullptr)
    throw ContractError("gemm: null buffer");
}

// Computes rows [i0,i1) of C. Marked noinline so the serial and OpenMP
// drivers execute the exact same machine code, which is what makes their
// outputs bit-identical rather than merely close.
ASLORA_NOINLINE void gemm_rows(bool trans_a, bool trans_b, int n, int k,
                               const real* a, const real* b, real* c,
                               bool accumulate, int i0, int i1, int lda) {
  if (!accumulate)
    std::memset(c + static_cast<size_t>(i0) * n, 0,
                static_cast<size_t>(i1 - i0) * n * sizeof(real));
  if (!trans_a && !trans_b) {
    // C[i,:] += A[i,l] * B[l,:], vectorizes along j.
    for (int i = i0; i < i1; ++i) {
      real* crow = c + static_cast<size_t>(i) * n;
      const real* arow = a + static_cast<size_t>(i) * k;
      for (int l = 0; l < k; ++l) {
        const real ail = arow[l];
        const real* brow = b + static_cast<size_t>(l) * n;
        for (int j = 0; j < n; ++j) crow[j] += ail * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // B is [n,k]; rows of both operands are contiguous, so dot products.
    for (int i = i0; i < i1; ++i) {
      real* crow = c + static_cast<size_t>(i) * n;
      const real* arow = a + static_cast<size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const real* brow = b + static_cast<size_t>(j) * k;
        real acc = 0;
        for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    // A is [k,m] with column stride lda == m; C[i,:] += A[l,i] * B[l,:].
    for (int i = i0; i < i1; ++i) {
      real* crow = c + static_cast<size_t>(i) * n;
      for (int l = 0; l < k; ++l) {
        const real ali = a[static_cast<size_t>(l) * lda + i];
        const real* brow = b + static_cast<size_t>(l) * n;
        for (int j = 0; j < n; ++j) crow[j] += ali * brow[j];
      }
    }
  } else {
    // A is [k,m], B is [n,k]. Rarely hit; kept for completeness.
    for (int i = i0; i < i1; ++i) {
      real* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const real* brow = b + static_cast<size_t>(j) * k;
        real acc = 0;
        for (int l = 0; l < k; ++l) acc += a[static_cast<size_t>(l) * lda + i] * brow[l];
        crow[j] += acc;
      }
    }
  }
}

Backend initial_backend() {
#ifdef _OPENMP
  if (omp_get_max_threads() > 1) return Backend::openmp;
#endif
  return Backend::serial;
}

std::atomic<Backend> g_backend{initial_backend()};

} // namespace

void set_backend(Backend b) { g_backend.store(b); }

Backend backend() { return g_backend.load(); }

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_serial(bool trans_a, bool trans_b, int m, int n, int k,
                 const real* a, const real* b, real* c, bool accumulate) {
  check_args(m, n, k, a, b, c);
  gemm_rows(trans_a, trans_b, n, k, a, b, c, accumulate, 0, m, m);
}

void gemm_openmp(bool trans_a, bool trans_b, int m, int n, int k,
                 const real* a, const real* b, real* c, bool accumulate) {
  check_args(m, n, k, a, b, c);
#ifdef _OPENMP
  const int threads = omp_get_max_threads();
  if (threads > 1 && m > 1) {
#pragma omp parallel num_threads(threads)
    {
      const int tid = omp_get_thread_num();
      const int nt = omp_get_num_threads();
      // Static row partition: thread boundaries never affect the value of
      // any C element, only who computes it.
      const int chunk = (m + nt - 1) / nt;
      const int i0 = tid * chunk;
      const int i1 = i0 + chunk < m ? i0 + chunk : m;
      if (i0 < i1) gemm_rows(trans_a, trans_b, n, k, a, b, c, accumulate, i0, i1, m);
    }
    return;
  }
#endif
  gemm_rows(trans_a, trans_b, n, k, a, b, c, accumulate, 0, m, m);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const real* a, const real* b, real* c, bool accumulate) {
  if (backend() == Backend::openmp)
    gemm_openmp(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  else
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

} // namespace aslora::kernels
