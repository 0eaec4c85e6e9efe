#pragma once

#include "scanfer/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scanfer {

using Bytes = std::vector<std::uint8_t>;

/// Binary P6 with maxval 255 -> 3 x H x W tensor with values pixel / 255.
Tensor decode_ppm(const Bytes& bytes);
/// 3 x H x W in [0, 1] -> binary P6, rounding to the nearest 8-bit level.
Bytes encode_ppm(const Tensor& image);

/// Binary P5 with maxval 255 -> H x W tensor.
Tensor decode_pgm(const Bytes& bytes);
/// H x W in [0, 1] -> binary P5.
Bytes encode_pgm(const Tensor& gray);

/// Half-pixel-center bilinear resampling to size x size, edges clamped.
Tensor resize_bilinear(const Tensor& image, Index size);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

}  // namespace scanfer
