#include "iris/degradation.hpp"

#include <cmath>
#include <stdexcept>

#include "iris/rng.hpp"

namespace iris {

namespace {

void check_kernel_args(double sigma_x, double sigma_y, int size) {
  if (sigma_x <= 0.0 || sigma_y <= 0.0)
    throw std::invalid_argument("blur kernel sigma must be positive");
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("blur kernel size must be odd and >= 3");
}

// Evaluates exp(-0.5 d' C^-1 d) on the grid and normalizes.
Eigen::MatrixXd gaussian_grid(double sigma_x, double sigma_y, double theta,
                              int size) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double vx = sigma_x * sigma_x, vy = sigma_y * sigma_y;
  // C = R diag(vx, vy) R', inverse via the same rotation of 1/v.
  const double ia = c * c / vx + s * s / vy;
  const double ib = c * s * (1.0 / vx - 1.0 / vy);
  const double ic = s * s / vx + c * c / vy;

  Eigen::MatrixXd w(size, size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double dy = i - half;
    for (int j = 0; j < size; ++j) {
      const double dx = j - half;
      const double e = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy;
      w(i, j) = std::exp(-0.5 * e);
      sum += w(i, j);
    }
  }
  w /= sum;
  return w;
}

// reflect-101 index: ...cba|abc...|cba...
inline int reflect(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace

void DegradationParams::validate() const {
  if (kernel_kinds.empty() || kernel_kinds.size() != kind_probs.size())
    throw std::invalid_argument("kernel kinds and probabilities must match");
  double total = 0.0;
  for (double p : kind_probs) {
    if (p < 0.0) throw std::invalid_argument("kind probability negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("kind probabilities must sum to 1");
  if (kernel_size < 3 || kernel_size % 2 == 0)
    throw std::invalid_argument("kernel_size must be odd and >= 3");
  if (iso_sigma_lo > iso_sigma_hi || aniso_sigma_lo > aniso_sigma_hi ||
      noise_sigma_lo > noise_sigma_hi)
    throw std::invalid_argument("range lo must not exceed hi");
  if (iso_sigma_lo <= 0.0 || aniso_sigma_lo <= 0.0)
    throw std::invalid_argument("sigma ranges must be positive");
  if (noise_sigma_lo < 0.0)
    throw std::invalid_argument("noise sigma must be nonnegative");
  if (scale_s < 1) throw std::invalid_argument("scale_s must be >= 1");
}

BlurKernel make_iso_kernel(double sigma, int size) {
  check_kernel_args(sigma, sigma, size);
  BlurKernel k;
  k.weights = gaussian_grid(sigma, sigma, 0.0, size);
  k.size = size;
  k.kind = KernelKind::iso;
  k.sigma_x = k.sigma_y = sigma;
  k.theta = 0.0;
  return k;
}

BlurKernel make_aniso_kernel(double sigma_x, double sigma_y, double theta,
                             int size) {
  check_kernel_args(sigma_x, sigma_y, size);
  BlurKernel k;
  k.weights = gaussian_grid(sigma_x, sigma_y, theta, size);
  k.size = size;
  k.kind = KernelKind::aniso;
  k.sigma_x = sigma_x;
  k.sigma_y = sigma_y;
  k.theta = theta;
  return k;
}

DegradationSpec sample_degradation(const DegradationParams& params,
                                   std::uint64_t seed) {
  params.validate();
  Rng rng(Rng::mix(seed, Rng::hash("degradation.spec")));

  // Draw order is fixed: kind, sigma(s), theta, noise.
  const double u = rng.uniform();
  double acc = 0.0;
  KernelKind kind = params.kernel_kinds.back();
  for (std::size_t i = 0; i < params.kernel_kinds.size(); ++i) {
    acc += params.kind_probs[i];
    if (u < acc) {
      kind = params.kernel_kinds[i];
      break;
    }
  }

  DegradationSpec spec;
  if (kind == KernelKind::iso) {
    const double sigma = rng.uniform(params.iso_sigma_lo, params.iso_sigma_hi);
    spec.kernel = make_iso_kernel(sigma, params.kernel_size);
  } else {
    const double sx = rng.uniform(params.aniso_sigma_lo, params.aniso_sigma_hi);
    const double sy = rng.uniform(params.aniso_sigma_lo, params.aniso_sigma_hi);
    const double theta = rng.uniform(0.0, 3.14159265358979323846);
    spec.kernel = make_aniso_kernel(sx, sy, theta, params.kernel_size);
  }
  spec.noise_sigma = rng.uniform(params.noise_sigma_lo, params.noise_sigma_hi);
  spec.scale_s = params.scale_s;
  spec.seed = Rng::mix(seed, Rng::hash("degradation.noise"));
  return spec;
}

Image degrade(const Image& image, const DegradationSpec& spec) {
  if (image.domain() != PixelDomain::unit)
    throw std::invalid_argument("degrade expects a unit-domain image");
  const int h = image.height(), w = image.width();
  const int ks = spec.kernel.size;
  if (ks > h || ks > w)
    throw std::invalid_argument("blur kernel larger than image");
  if (spec.scale_s < 1) throw std::invalid_argument("scale_s must be >= 1");

  const int s = spec.scale_s;
  const int oh = (h + s - 1) / s, ow = (w + s - 1) / s;
  const int half = ks / 2;
  const Eigen::MatrixXd& kw = spec.kernel.weights;

  Image out(oh, ow, PixelDomain::unit);
  for (int oy = 0; oy < oh; ++oy) {
    const int y = oy * s;
    for (int ox = 0; ox < ow; ++ox) {
      const int x = ox * s;
      double acc[3] = {0.0, 0.0, 0.0};
      for (int ky = 0; ky < ks; ++ky) {
        const int sy = reflect(y + ky - half, h);
        for (int kx = 0; kx < ks; ++kx) {
          const int sx = reflect(x + kx - half, w);
          const double kv = kw(ky, kx);
          for (int c = 0; c < 3; ++c) acc[c] += kv * image.at(sy, sx, c);
        }
      }
      for (int c = 0; c < 3; ++c) out.at(oy, ox, c) = acc[c];
    }
  }

  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    const double sd = spec.noise_sigma / 255.0;
    for (double& v : out.pixels()) v += sd * rng.normal();
  }
  for (double& v : out.pixels()) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
  }
  return out;
}

Image resample(const Image& image, int target_h, int target_w,
               ResampleMethod method) {
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("resample target must be positive");
  const int h = image.height(), w = image.width();
  if (target_h == h && target_w == w) return image;

  Image out(target_h, target_w, image.domain());
  const double sy = static_cast<double>(h) / target_h;
  const double sx = static_cast<double>(w) / target_w;

  if (method == ResampleMethod::nearest) {
    for (int y = 0; y < target_h; ++y) {
      int iy = static_cast<int>((y + 0.5) * sy);
      if (iy >= h) iy = h - 1;
      for (int x = 0; x < target_w; ++x) {
        int ix = static_cast<int>((x + 0.5) * sx);
        if (ix >= w) ix = w - 1;
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(iy, ix, c);
      }
    }
    return out;
  }

  for (int y = 0; y < target_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    if (fy < 0.0) fy = 0.0;
    int y0 = static_cast<int>(fy);
    if (y0 > h - 1) y0 = h - 1;
    const int y1 = (y0 + 1 < h) ? y0 + 1 : y0;
    const double ty = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      if (fx < 0.0) fx = 0.0;
      int x0 = static_cast<int>(fx);
      if (x0 > w - 1) x0 = w - 1;
      const int x1 = (x0 + 1 < w) ? x0 + 1 : x0;
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top =
            (1.0 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c);
        const double bot =
            (1.0 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c);
        out.at(y, x, c) = (1.0 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

}  // namespace iris
