#include "eamamba/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::istream& is) : is_(is) {}

  std::size_t offset() const { return offset_; }

  int get() {
    const int c = is_.get();
    if (c != std::char_traits<char>::eof()) ++offset_;
    return c;
  }
  int peek() { return is_.peek(); }

  void skip_space_and_comments() {
    for (;;) {
      const int c = peek();
      if (c == '#') {
        while (get() != '\n' && peek() != std::char_traits<char>::eof()) {
        }
      } else if (c != std::char_traits<char>::eof() && std::isspace(c)) {
        get();
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = offset_;
    std::size_t v = 0;
    bool any = false;
    while (peek() != std::char_traits<char>::eof() && std::isdigit(peek())) {
      v = v * 10 + static_cast<std::size_t>(get() - '0');
      if (v > 1u << 24) throw ParseError(std::string("image ") + what + " too large", start);
      any = true;
    }
    if (!any) throw ParseError(std::string("expected image ") + what, start);
    return v;
  }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

Tensor<float> read_image(std::istream& is) {
  HeaderReader r(is);
  const int p = r.get();
  const int kind = r.get();
  if (p != 'P' || (kind != '5' && kind != '6')) throw ParseError("expected P5 or P6 magic", 0);
  const std::size_t channels = kind == '5' ? 1 : 3;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  r.skip_space_and_comments();
  const std::size_t maxval_offset = r.offset();
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) throw ParseError("image extents must be positive", maxval_offset);
  if (maxval != 255) throw ParseError("only maxval 255 is supported", maxval_offset);
  const int sep = r.get();
  if (sep == std::char_traits<char>::eof() || !std::isspace(sep))
    throw ParseError("expected whitespace after maxval", r.offset());

  const std::size_t n = width * height * channels;
  std::vector<char> bytes(n);
  is.read(bytes.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw ParseError("truncated pixel data", r.offset() + static_cast<std::size_t>(is.gcount()));
  Tensor<float> t({height, width, channels});
  for (std::size_t i = 0; i < n; ++i)
    t[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  return t;
}

Tensor<float> read_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image '" + path + "'");
  return read_image(f);
}

void write_image(std::ostream& os, const Tensor<float>& image) {
  if (image.rank() != 3 || (image.extent(2) != 1 && image.extent(2) != 3))
    throw DimensionError("write_image: expected [H, W, 1] or [H, W, 3], got " +
                         shape_str(image.shape()));
  os << (image.extent(2) == 1 ? "P5" : "P6") << '\n'
     << image.extent(1) << ' ' << image.extent(0) << '\n'
     << "255\n";
  std::vector<char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = static_cast<char>(to_byte(image[i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_image(const std::string& path, const Tensor<float>& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write image '" + path + "'");
  write_image(f, image);
  if (!f) throw std::runtime_error("failed writing image '" + path + "'");
}

}  // namespace eamamba
