#include "backends.hpp"

#include "wkd/kernels/kernels.hpp"

namespace wkd::kernels::detail {

namespace {

void nn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  ref::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc);
}
void nt(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  ref::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc);
}
void tn(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
        const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  ref::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{nn, nt, tn};
  return table;
}

}  // namespace wkd::kernels::detail
