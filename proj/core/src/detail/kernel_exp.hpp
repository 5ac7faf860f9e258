#pragma once

#include <cstddef>

namespace fastval::detail {

/// out[i] = exp(scale * in[i]). Built with vectorized libm where available.
void scaled_exp(const double* in, double scale, double* out, std::size_t n) noexcept;

}  // namespace fastval::detail
