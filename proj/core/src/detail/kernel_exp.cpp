#include "kernel_exp.hpp"

#include <cmath>

namespace fastval::detail {

void scaled_exp(const double* in, double scale, double* out, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(scale * in[i]);
}

}  // namespace fastval::detail
