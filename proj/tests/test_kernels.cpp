#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wkd/kernels/kernels.hpp"

using namespace wkd::kernels;

namespace {

std::vector<float> random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Product by definition in double.
std::vector<double> naive(std::size_t M, std::size_t N, std::size_t K, const std::vector<float>& A, bool ta,
                          const std::vector<float>& B, bool tb) {
  std::vector<double> C(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double a = ta ? A[k * M + i] : A[i * K + k];
        const double b = tb ? B[j * K + k] : B[k * N + j];
        s += a * b;
      }
      C[i * N + j] = s;
    }
  return C;
}

enum class Op { NN, NT, TN };

void run(Op op, std::size_t M, std::size_t N, std::size_t K, const std::vector<float>& A, const std::vector<float>& B,
         std::vector<float>& C) {
  switch (op) {
    case Op::NN:
      gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N);
      break;
    case Op::NT:
      gemm_nt(M, N, K, A.data(), K, B.data(), K, C.data(), N);
      break;
    case Op::TN:
      gemm_tn(M, N, K, A.data(), M, B.data(), N, C.data(), N);
      break;
  }
}

struct BackendGuard {
  Backend saved = active_backend();
  ~BackendGuard() { set_backend(saved); }
};

const std::vector<std::array<std::size_t, 3>> kSizes{
    {1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 33}, {16, 800, 16}, {33, 64, 27}, {64, 1, 800}, {7, 50, 288}};

}  // namespace

TEST_CASE("every backend matches the product by definition") {
  BackendGuard guard;
  std::mt19937_64 rng(11);
  for (Backend b : {Backend::Scalar, Backend::Avx2}) {
    if (!backend_supported(b)) continue;
    set_backend(b);
    for (Op op : {Op::NN, Op::NT, Op::TN}) {
      for (const auto& [M, N, K] : kSizes) {
        const auto A = random_matrix(M * K, rng), B = random_matrix(K * N, rng);
        std::vector<float> C(M * N, 0.5f);
        run(op, M, N, K, A, B, C);
        const auto ref = naive(M, N, K, A, op == Op::TN, B, op == Op::NT);
        for (std::size_t i = 0; i < C.size(); ++i) {
          REQUIRE(C[i] == doctest::Approx(ref[i] + 0.5).epsilon(1e-4).scale(static_cast<double>(K)));
        }
      }
    }
  }
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!backend_supported(Backend::Avx2)) {
    MESSAGE("AVX2 not available on this CPU; equivalence test skipped");
    return;
  }
  BackendGuard guard;
  std::mt19937_64 rng(12);
  for (Op op : {Op::NN, Op::NT, Op::TN}) {
    for (const auto& [M, N, K] : kSizes) {
      const auto A = random_matrix(M * K, rng), B = random_matrix(K * N, rng);
      std::vector<float> cs(M * N, 0.0f), cv(M * N, 0.0f);
      set_backend(Backend::Scalar);
      run(op, M, N, K, A, B, cs);
      set_backend(Backend::Avx2);
      run(op, M, N, K, A, B, cv);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        // Fused multiply-adds and split accumulators round differently; the
        // rounding error grows with K, not with the (possibly cancelled) result.
        const double tol = 1e-5 * std::fabs(cs[i]) + 1e-6 * static_cast<double>(K);
        REQUIRE(std::fabs(static_cast<double>(cv[i]) - cs[i]) <= tol);
      }
    }
  }
}

TEST_CASE("row results do not depend on how many rows are computed together") {
  BackendGuard guard;
  std::mt19937_64 rng(13);
  for (Backend b : {Backend::Scalar, Backend::Avx2}) {
    if (!backend_supported(b)) continue;
    set_backend(b);
    const std::size_t M = 9, N = 37, K = 29;
    for (Op op : {Op::NN, Op::NT}) {
      const auto A = random_matrix(M * K, rng), B = random_matrix(K * N, rng);
      std::vector<float> full(M * N, 0.0f);
      run(op, M, N, K, A, B, full);
      for (std::size_t i = 0; i < M; ++i) {
        std::vector<float> row(A.begin() + static_cast<std::ptrdiff_t>(i * K),
                               A.begin() + static_cast<std::ptrdiff_t>((i + 1) * K));
        std::vector<float> c(N, 0.0f);
        run(op, 1, N, K, row, B, c);
        for (std::size_t j = 0; j < N; ++j) REQUIRE(c[j] == full[i * N + j]);
      }
    }
  }
}

TEST_CASE("backend selection") {
  BackendGuard guard;
  CHECK(backend_supported(Backend::Scalar));
  set_backend(Backend::Scalar);
  CHECK(active_backend() == Backend::Scalar);
  CHECK(backend_name(Backend::Scalar) == "scalar");
  CHECK(backend_name(Backend::Avx2) == "avx2");
  if (!backend_supported(Backend::Avx2)) CHECK_THROWS_AS(set_backend(Backend::Avx2), std::invalid_argument);
}

TEST_CASE("double precision runs the reference templates") {
  const std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8};
  std::vector<double> C(4, 0.0);
  gemm_nn_t<double>(2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);
  CHECK(C == std::vector<double>{19, 22, 43, 50});
}
