#pragma once

#include "scanfer/ops.hpp"
#include "scanfer/rng.hpp"

#include <filesystem>
#include <string>

namespace testutil {

using scanfer::Index;
using scanfer::Shape;
using scanfer::Tensor;

inline Tensor random_tensor(const Shape& shape, scanfer::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("scanfer_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
