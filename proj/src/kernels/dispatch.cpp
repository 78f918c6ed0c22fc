#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "backends.hpp"
#include "wkd/kernels/kernels.hpp"

namespace wkd::kernels {

namespace {

const detail::KernelTable& table_for(Backend b) {
#if defined(WKD_HAVE_AVX2)
  if (b == Backend::Avx2) return detail::avx2_table();
#endif
  (void)b;
  return detail::scalar_table();
}

Backend detect() {
  if (const char* env = std::getenv("WKD_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && backend_supported(Backend::Avx2)) return Backend::Avx2;
  }
  return backend_supported(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

struct State {
  std::atomic<Backend> backend{detect()};
  std::atomic<const detail::KernelTable*> table{&table_for(backend.load())};
};

State& state() {
  static State s;
  return s;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_supported(Backend b) {
  if (b == Backend::Scalar) return true;
#if defined(WKD_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return state().backend.load(); }

void set_backend(Backend b) {
  if (!backend_supported(b)) {
    throw std::invalid_argument("kernel backend not supported on this CPU: " +
                                std::string(backend_name(b)));
  }
  state().backend.store(b);
  state().table.store(&table_for(b));
}

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  state().table.load(std::memory_order_relaxed)->nn(M, N, K, A, lda, B, ldb, C, ldc);
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  state().table.load(std::memory_order_relaxed)->nt(M, N, K, A, lda, B, ldb, C, ldc);
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
             const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  state().table.load(std::memory_order_relaxed)->tn(M, N, K, A, lda, B, ldb, C, ldc);
}

}  // namespace wkd::kernels
