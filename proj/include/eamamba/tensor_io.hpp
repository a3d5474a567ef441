#pragma once

#include <filesystem>
#include <iosfwd>

#include "eamamba/tensor.hpp"

namespace eamamba {

// EAMT dump: "EAMT", u32 rank, u32 extents, then f32 values in row-major
// order. All integers and floats little-endian.
void write_eamt(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_eamt(std::istream& in);

void save_eamt(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_eamt(const std::filesystem::path& path);

}  // namespace eamamba
