#pragma once
// Minimal dense-matrix kernels for the language model. Row-major float or
// double, GEMM dispatched to CBLAS when available with a portable blocked
// fallback.

#include <cstddef>
#include <vector>

namespace kgtod::nn {

template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, T(0)) {}

    T* data() { return d.data(); }
    const T* data() const { return d.data(); }
    T& at(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return d.size(); }
    void zero() { std::fill(d.begin(), d.end(), T(0)); }
};

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is m x k, op(B) is k x n, C is m x n.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

// Pins the BLAS backend to one thread for reproducible results. No-op for
// the fallback kernels. Called once by the LM before any GEMM.
void use_single_thread_blas();

}  // namespace kgtod::nn
