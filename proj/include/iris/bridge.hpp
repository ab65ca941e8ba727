#ifndef IRIS_BRIDGE_HPP_
#define IRIS_BRIDGE_HPP_

#include <vector>

#include "iris/image.hpp"
#include "iris/tensor.hpp"

namespace iris {

// Unit-domain images -> [N, H, W, 3] tensor.
template <class S>
Tensor<S> batch_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("batch_to_tensor: empty");
  const int h = images[0].height(), w = images[0].width();
  Tensor<S> t({static_cast<int>(images.size()), h, w, 3});
  long off = 0;
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w)
      throw std::invalid_argument("batch_to_tensor: mixed image sizes");
    const Image u = img.to_unit();
    for (double v : u.pixels()) t.values()[off++] = static_cast<S>(v);
  }
  return t;
}

// One sample of a [N, H, W, 3] tensor -> unit-domain image.
template <class S>
Image tensor_to_image(const Tensor<S>& t, int n = 0) {
  if (t.rank() != 4 || t.dim(3) != 3)
    throw std::invalid_argument("tensor_to_image: wants [N,H,W,3]");
  const int h = t.dim(1), w = t.dim(2);
  Image img(h, w, PixelDomain::unit);
  const long base = static_cast<long>(n) * h * w * 3;
  for (long i = 0; i < static_cast<long>(h) * w * 3; ++i) {
    double v = static_cast<double>(t.values()[base + i]);
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    img.pixels()[i] = v;
  }
  return img;
}

}  // namespace iris

#endif  // IRIS_BRIDGE_HPP_
