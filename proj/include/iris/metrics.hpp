#ifndef IRIS_METRICS_HPP_
#define IRIS_METRICS_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "iris/image.hpp"

namespace iris {

struct EmbeddingSet {
  Eigen::MatrixXd vectors;  // N x D
  std::string source_tag;
};

struct MetricReport {
  double psnr_mean = 0.0;
  double fid = 0.0;
  double recognition_rate = 0.0;           // on restored images
  double recognition_rate_degraded = 0.0;  // no-restoration baseline
  int n_samples = 0;

  // key: value lines, one per field.
  std::string to_text() const;
  // single tab-separated row matching tsv_header().
  std::string to_tsv_row() const;
  static std::string tsv_header();
};

// 10*log10(MAX^2 / MSE); MAX is 1 in unit domain, 255 in byte8. Returns
// `cap` when the images are identical.
double psnr(const Image& a, const Image& b, double cap = 99.0);

// Principal square root of a symmetric PSD matrix via eigendecomposition;
// eigenvalues within round-off below zero are clamped.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

// Frechet distance between Gaussians fitted to the two sets
// (1/(N-1) covariance normalization).
double fid(const EmbeddingSet& a, const EmbeddingSet& b);

double recognition_rate(const std::vector<int>& predicted,
                        const std::vector<int>& truth);

}  // namespace iris

#endif  // IRIS_METRICS_HPP_
