#pragma once

#include "aslora/common.hpp"

namespace aslora::kernels {

/// Which gemm driver services calls. Both produce bit-identical output: the
/// OpenMP driver only partitions rows of C across threads and every element
/// is accumulated by a single thread in the same k-order as the serial path.
enum class Backend { serial, openmp };

void set_backend(Backend b);
Backend backend();

/// True when the library was compiled with OpenMP support.
bool openmp_compiled();

/// Thread count the OpenMP driver would use (1 when not compiled in).
int max_threads();

/// C[m,n] = op(A) * op(B), or += when accumulate is set.
/// op(A) is A[m,k] row-major, or the transpose of A[k,m] when trans_a.
/// op(B) is B[k,n] row-major, or the transpose of B[n,k] when trans_b.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const real* a, const real* b, real* c, bool accumulate = false);

/// Single-thread driver, available directly for tests and benchmarks.
void gemm_serial(bool trans_a, bool trans_b, int m, int n, int k,
                 const real* a, const real* b, real* c, bool accumulate = false);

/// Row-parallel driver. Falls back to the serial path when OpenMP is not
/// compiled in.
void gemm_openmp(bool trans_a, bool trans_b, int m, int n, int k,
                 const real* a, const real* b, real* c, bool accumulate = false);

} // namespace aslora::kernels
