#ifndef IRIS_DEGRADATION_HPP_
#define IRIS_DEGRADATION_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "iris/image.hpp"

namespace iris {

enum class KernelKind { iso, aniso };

// Normalized 2-D Gaussian blur kernel sampled on the integer grid.
struct BlurKernel {
  Eigen::MatrixXd weights;  // size x size, nonnegative, sums to 1
  int size = 0;             // odd
  KernelKind kind = KernelKind::iso;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double theta = 0.0;  // orientation in [0, pi)
};

// One concrete realization of the degradation model: blur, stride-s
// subsample, additive Gaussian noise. Fully determines the degraded output.
struct DegradationSpec {
  BlurKernel kernel;
  int scale_s = 1;
  double noise_sigma = 0.0;  // byte8 scale; applied as noise_sigma/255
  std::uint64_t seed = 0;
};

// Sampling ranges for random degradations.
struct DegradationParams {
  std::vector<KernelKind> kernel_kinds{KernelKind::iso, KernelKind::aniso};
  std::vector<double> kind_probs{0.5, 0.5};
  int kernel_size = 41;
  double iso_sigma_lo = 0.1, iso_sigma_hi = 10.0;
  double aniso_sigma_lo = 0.8, aniso_sigma_hi = 8.0;
  double noise_sigma_lo = 0.0, noise_sigma_hi = 20.0;
  int scale_s = 4;

  void validate() const;
};

BlurKernel make_iso_kernel(double sigma, int size);
BlurKernel make_aniso_kernel(double sigma_x, double sigma_y, double theta,
                             int size);

DegradationSpec sample_degradation(const DegradationParams& params,
                                   std::uint64_t seed);

// Applies the spec to a unit-domain image: reflect-padded convolution per
// channel, stride-s subsample from offset 0, additive N(0, (sigma/255)^2)
// noise from spec.seed, clip to [0, 1]. Output is ceil(H/s) x ceil(W/s).
Image degrade(const Image& image, const DegradationSpec& spec);

enum class ResampleMethod { nearest, bilinear };

// Separable resize. Bilinear samples at pixel centers (align-corners-false).
Image resample(const Image& image, int target_h, int target_w,
               ResampleMethod method);

}  // namespace iris

#endif  // IRIS_DEGRADATION_HPP_
