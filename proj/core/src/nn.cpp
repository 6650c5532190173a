#include "kgtod/nn.hpp"

#ifdef KGTOD_USE_CBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace kgtod::nn {

#ifdef KGTOD_USE_CBLAS

void use_single_thread_blas() {
    static const bool done = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)done;
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#else

void use_single_thread_blas() {}

namespace {

template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
               const T* b, int ldb, T beta, T* c, int ldc) {
    auto A = [&](int r, int col) { return trans_a ? a[static_cast<std::size_t>(col) * lda + r]
                                                  : a[static_cast<std::size_t>(r) * lda + col]; };
    auto B = [&](int r, int col) { return trans_b ? b[static_cast<std::size_t>(col) * ldb + r]
                                                  : b[static_cast<std::size_t>(r) * ldb + col]; };
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int p = 0; p < k; ++p) acc += A(i, p) * B(p, j);
            T* out = &c[static_cast<std::size_t>(i) * ldc + j];
            *out = alpha * acc + beta * *out;
        }
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#endif

}  // namespace kgtod::nn
