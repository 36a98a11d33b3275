#pragma once

#include <cstddef>

namespace deepfeat::nn::kernels {

enum class Trans { No, Yes };

/// Row-major C[M x N] = alpha * op(A)[M x K] * op(B)[K x N] + beta * C.
///
/// op(A) is A (lda >= K) or A^T (A stored K x M, lda >= M); likewise for B.
/// When beta == 0, C is overwritten and its prior contents are never read.
///
/// Packed, register-blocked and OpenMP-parallel over output tiles. Every
/// output element is reduced by exactly one thread in a fixed order, so the
/// result does not depend on the thread count.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

namespace reference {

/// Serial triple-loop GEMM with the same contract as kernels::gemm.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace reference

}  // namespace deepfeat::nn::kernels
