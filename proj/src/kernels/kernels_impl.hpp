#pragma once

#include "saplma/kernels.hpp"

namespace saplma::kernels::detail {

extern const KernelTable scalar_table;
#if defined(SAPLMA_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(SAPLMA_HAVE_NEON)
extern const KernelTable neon_table;
#endif

} // namespace saplma::kernels::detail
