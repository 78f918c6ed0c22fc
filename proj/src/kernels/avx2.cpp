// Compiled with -mavx2 -mfma. Only reached after a CPUID check.

#include <immintrin.h>

#include <cmath>

#include "backends.hpp"

namespace wkd::kernels::detail {

namespace {

// A element (row i, inner k) for the two A layouts the axpy-style kernels see.
template <bool TransA>
inline float a_at(const float* A, std::size_t lda, std::size_t i, std::size_t k) {
  if constexpr (TransA) {
    return A[k * lda + i];
  } else {
    return A[i * lda + k];
  }
}

// 4 rows x 16 columns register tile; every element is accumulated with one
// FMA per k in ascending k, matching the tail paths below bit for bit.
template <bool TransA>
void tile_4x16(std::size_t i, std::size_t j, std::size_t K, const float* A, std::size_t lda,
               const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  float* c0 = C + (i + 0) * ldc + j;
  float* c1 = C + (i + 1) * ldc + j;
  float* c2 = C + (i + 2) * ldc + j;
  float* c3 = C + (i + 3) * ldc + j;
  __m256 r00 = _mm256_loadu_ps(c0), r01 = _mm256_loadu_ps(c0 + 8);
  __m256 r10 = _mm256_loadu_ps(c1), r11 = _mm256_loadu_ps(c1 + 8);
  __m256 r20 = _mm256_loadu_ps(c2), r21 = _mm256_loadu_ps(c2 + 8);
  __m256 r30 = _mm256_loadu_ps(c3), r31 = _mm256_loadu_ps(c3 + 8);
  for (std::size_t k = 0; k < K; ++k) {
    const float* b = B + k * ldb + j;
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    __m256 a = _mm256_set1_ps(a_at<TransA>(A, lda, i + 0, k));
    r00 = _mm256_fmadd_ps(a, b0, r00);
    r01 = _mm256_fmadd_ps(a, b1, r01);
    a = _mm256_set1_ps(a_at<TransA>(A, lda, i + 1, k));
    r10 = _mm256_fmadd_ps(a, b0, r10);
    r11 = _mm256_fmadd_ps(a, b1, r11);
    a = _mm256_set1_ps(a_at<TransA>(A, lda, i + 2, k));
    r20 = _mm256_fmadd_ps(a, b0, r20);
    r21 = _mm256_fmadd_ps(a, b1, r21);
    a = _mm256_set1_ps(a_at<TransA>(A, lda, i + 3, k));
    r30 = _mm256_fmadd_ps(a, b0, r30);
    r31 = _mm256_fmadd_ps(a, b1, r31);
  }
  _mm256_storeu_ps(c0, r00);
  _mm256_storeu_ps(c0 + 8, r01);
  _mm256_storeu_ps(c1, r10);
  _mm256_storeu_ps(c1 + 8, r11);
  _mm256_storeu_ps(c2, r20);
  _mm256_storeu_ps(c2 + 8, r21);
  _mm256_storeu_ps(c3, r30);
  _mm256_storeu_ps(c3 + 8, r31);
}

// One row, columns [j, N): 8-wide vectors then scalar fma tail.
template <bool TransA>
void row_strip(std::size_t i, std::size_t j, std::size_t N, std::size_t K, const float* A,
               std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  float* c = C + i * ldc;
  for (; j + 8 <= N; j += 8) {
    __m256 r = _mm256_loadu_ps(c + j);
    for (std::size_t k = 0; k < K; ++k) {
      r = _mm256_fmadd_ps(_mm256_set1_ps(a_at<TransA>(A, lda, i, k)),
                          _mm256_loadu_ps(B + k * ldb + j), r);
    }
    _mm256_storeu_ps(c + j, r);
  }
  for (; j < N; ++j) {
    float r = c[j];
    for (std::size_t k = 0; k < K; ++k) r = std::fma(a_at<TransA>(A, lda, i, k), B[k * ldb + j], r);
    c[j] = r;
  }
}

template <bool TransA>
void axpy_gemm(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
               const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  const std::size_t n16 = N - N % 16;
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    for (std::size_t j = 0; j < n16; j += 16) tile_4x16<TransA>(i, j, K, A, lda, B, ldb, C, ldc);
    if (n16 < N) {
      for (std::size_t r = 0; r < 4; ++r) row_strip<TransA>(i + r, n16, N, K, A, lda, B, ldb, C, ldc);
    }
  }
  for (; i < M; ++i) row_strip<TransA>(i, 0, N, K, A, lda, B, ldb, C, ldc);
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

float dot(const float* a, const float* b, std::size_t K) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  std::size_t k = 0;
  for (; k + 16 <= K; k += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), s1);
  }
  for (; k + 8 <= K; k += 8) s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
  float acc = hsum(_mm256_add_ps(s0, s1));
  for (; k < K; ++k) acc = std::fma(a[k], b[k], acc);
  return acc;
}

void nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  axpy_gemm<false>(M, N, K, A, lda, B, ldb, C, ldc);
}

void tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  axpy_gemm<true>(M, N, K, A, lda, B, ldb, C, ldc);
}

void nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    const float* a = A + i * lda;
    float* c = C + i * ldc;
    for (std::size_t j = 0; j < N; ++j) c[j] += dot(a, B + j * ldb, K);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{nn, nt, tn};
  return table;
}

}  // namespace wkd::kernels::detail
