#include "eamamba/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

constexpr std::array<char, 4> kMagic{'E', 'A', 'M', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, std::size_t& offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("EAMT: truncated stream", offset);
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_eamt(std::ostream& out, const Tensor<float>& t) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw std::runtime_error("EAMT: write failed");
}

Tensor<float> read_eamt(std::istream& in) {
  std::size_t offset = 0;
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw ParseError("EAMT: bad magic", 0);
  offset = 4;
  const std::uint32_t rank = get_u32(in, offset);
  if (rank == 0 || rank > 4) throw ParseError("EAMT: unsupported rank " + std::to_string(rank), 4);
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::size_t at = offset;
    const std::uint32_t e = get_u32(in, offset);
    if (e == 0) throw ParseError("EAMT: zero extent", at);
    shape.push_back(e);
  }
  std::vector<float> data(shape_numel(shape));
  for (float& v : data) v = std::bit_cast<float>(get_u32(in, offset));
  return Tensor<float>(std::move(shape), std::move(data));
}

void save_eamt(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_eamt(out, t);
}

Tensor<float> load_eamt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_eamt(in);
}

}  // namespace eamamba
