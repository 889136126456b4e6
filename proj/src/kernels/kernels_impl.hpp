#pragma once

#include "fracmatch/kernels.hpp"

namespace fracmatch::kernels::detail {

const KernelTable& scalar_table() noexcept;
#if defined(FRACMATCH_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

}  // namespace fracmatch::kernels::detail
