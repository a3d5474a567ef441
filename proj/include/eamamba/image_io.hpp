#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "eamamba/tensor.hpp"

namespace eamamba {

// Binary netpbm: P5 (grey) -> [H, W, 1], P6 (RGB) -> [H, W, 3], maxval 255.
// Samples map to [0, 1] by /255. Malformed input throws ParseError.
Tensor<float> read_image(std::istream& is);
Tensor<float> read_image(const std::string& path);

// Values are clamped to [0, 1] and rounded half-up: floor(v * 255 + 0.5).
void write_image(std::ostream& os, const Tensor<float>& image);
void write_image(const std::string& path, const Tensor<float>& image);

std::uint8_t to_byte(double v);

}  // namespace eamamba
