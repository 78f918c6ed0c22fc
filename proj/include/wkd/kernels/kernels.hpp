#pragma once

// Dense GEMM kernels behind the tensor core.
//
// Every kernel accumulates into C (C += op(A) * op(B)); callers zero C first
// when they want a plain product. All matrices are row-major with explicit
// leading dimensions.
//
// Two backends exist for float: a portable scalar reference and an AVX2+FMA
// variant. The backend is picked once at startup from CPUID and can be pinned
// with set_backend() or the WKD_KERNELS environment variable
// ("scalar" | "avx2"). Double precision always runs the reference templates.
//
// Determinism contract: within one backend, each output element of gemm_nn
// and gemm_tn is a sequential accumulation over the inner index in ascending
// order, and each element of gemm_nt depends only on the two rows it dots.
// Results therefore never depend on matrix size, blocking, or which other
// rows are computed alongside.

#include <cstddef>
#include <string_view>

namespace wkd::kernels {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend b);
bool backend_supported(Backend b);
Backend active_backend();
// Throws std::invalid_argument when the CPU cannot run the requested backend.
void set_backend(Backend b);

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc);
// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc);
// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc);

namespace ref {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * ldc;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[i * lda + k];
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * lda;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * ldb;
      T acc = T(0);
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * ldc + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * ldc;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[k * lda + i];
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

}  // namespace ref

// Precision-generic entry points used by the layer templates.
template <typename T>
inline void gemm_nn_t(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                      const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  ref::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc);
}
template <>
inline void gemm_nn_t<float>(std::size_t M, std::size_t N, std::size_t K, const float* A,
                             std::size_t lda, const float* B, std::size_t ldb, float* C,
                             std::size_t ldc) {
  gemm_nn(M, N, K, A, lda, B, ldb, C, ldc);
}

template <typename T>
inline void gemm_nt_t(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                      const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  ref::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc);
}
template <>
inline void gemm_nt_t<float>(std::size_t M, std::size_t N, std::size_t K, const float* A,
                             std::size_t lda, const float* B, std::size_t ldb, float* C,
                             std::size_t ldc) {
  gemm_nt(M, N, K, A, lda, B, ldb, C, ldc);
}

template <typename T>
inline void gemm_tn_t(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                      const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  ref::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc);
}
template <>
inline void gemm_tn_t<float>(std::size_t M, std::size_t N, std::size_t K, const float* A,
                             std::size_t lda, const float* B, std::size_t ldb, float* C,
                             std::size_t ldc) {
  gemm_tn(M, N, K, A, lda, B, ldb, C, ldc);
}

}  // namespace wkd::kernels
