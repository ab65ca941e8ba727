#include "iris/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace iris {

Image Image::to_unit() const {
  if (domain_ == PixelDomain::unit) return *this;
  Image out(height_, width_, PixelDomain::unit);
  for (std::size_t i = 0; i < px_.size(); ++i) out.px_[i] = px_[i] / 255.0;
  return out;
}

Image Image::to_byte8() const {
  if (domain_ == PixelDomain::byte8) return *this;
  Image out(height_, width_, PixelDomain::byte8);
  for (std::size_t i = 0; i < px_.size(); ++i) {
    double v = std::lround(px_[i] * 255.0);
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    out.px_[i] = v;
  }
  return out;
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);

  auto next_token = [&in, &path]() -> std::string {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = in.get();
      } else if (std::isspace(c)) {
        c = in.get();
      } else {
        break;
      }
    }
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (tok.empty()) throw std::runtime_error("truncated PPM header: " + path);
    return tok;
  };

  if (next_token() != "P6")
    throw std::runtime_error("not a binary PPM (P6): " + path);
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PPM geometry in " + path);

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("truncated PPM payload: " + path);

  Image img(h, w, PixelDomain::byte8);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels()[i] = static_cast<double>(raw[i]);
  return img;
}

void write_ppm(const Image& image, const std::string& path) {
  const Image b = image.to_byte8();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P6\n" << b.width() << " " << b.height() << "\n255\n";
  std::vector<unsigned char> raw(b.pixels().size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<unsigned char>(b.pixels()[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace iris
