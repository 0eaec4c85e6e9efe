#pragma once

#include "scanfer/rng.hpp"
#include "scanfer/tensor.hpp"

#include <cmath>

namespace scanfer {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(Shape shape, Index fan_in, Index fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace scanfer
