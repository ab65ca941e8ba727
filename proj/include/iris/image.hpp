#ifndef IRIS_IMAGE_HPP_
#define IRIS_IMAGE_HPP_

#include <string>
#include <vector>

namespace iris {

enum class PixelDomain { byte8, unit };

// H x W x 3 raster, interleaved RGB, stored as double regardless of the
// declared domain. byte8 images hold values in [0, 255]; unit images in
// [0, 1]. Domain conversion through byte8 is exact for all 256 levels.
class Image {
 public:
  Image() = default;
  Image(int height, int width, PixelDomain domain, double fill = 0.0)
      : height_(height),
        width_(width),
        domain_(domain),
        px_(static_cast<std::size_t>(height) * width * 3, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  PixelDomain domain() const { return domain_; }
  bool empty() const { return px_.empty(); }

  double& at(int y, int x, int c) {
    return px_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return px_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  std::vector<double>& pixels() { return px_; }
  const std::vector<double>& pixels() const { return px_; }

  Image to_unit() const;
  Image to_byte8() const;

 private:
  int height_ = 0;
  int width_ = 0;
  PixelDomain domain_ = PixelDomain::unit;
  std::vector<double> px_;
};

// Binary PPM (P6), 8-bit. Reading returns a byte8-domain image.
Image read_ppm(const std::string& path);
void write_ppm(const Image& image, const std::string& path);

}  // namespace iris

#endif  // IRIS_IMAGE_HPP_
