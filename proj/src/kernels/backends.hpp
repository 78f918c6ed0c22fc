#pragma once

#include <cstddef>

namespace wkd::kernels::detail {

using GemmFn = void (*)(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                        const float*, std::size_t, float*, std::size_t);

struct KernelTable {
  GemmFn nn;
  GemmFn nt;
  GemmFn tn;
};

const KernelTable& scalar_table();
#if defined(WKD_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace wkd::kernels::detail
