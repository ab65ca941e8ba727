#include "iris/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace iris {

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "psnr_mean: " << psnr_mean << "\n";
  os << "fid: " << fid << "\n";
  os << "recognition_rate: " << recognition_rate << "\n";
  os << "recognition_rate_degraded: " << recognition_rate_degraded << "\n";
  os << "n_samples: " << n_samples << "\n";
  return os.str();
}

std::string MetricReport::tsv_header() {
  return "psnr_mean\tfid\trecognition_rate\trecognition_rate_degraded\tn_"
         "samples";
}

std::string MetricReport::to_tsv_row() const {
  std::ostringstream os;
  os << psnr_mean << '\t' << fid << '\t' << recognition_rate << '\t'
     << recognition_rate_degraded << '\t' << n_samples;
  return os.str();
}

double psnr(const Image& a, const Image& b, double cap) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument("psnr: image dimensions differ");
  if (a.domain() != b.domain())
    throw std::invalid_argument("psnr: image domains differ");
  const double maxv = a.domain() == PixelDomain::unit ? 1.0 : 255.0;
  double mse = 0.0;
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pa.size());
  if (mse == 0.0) return cap;
  return 10.0 * std::log10(maxv * maxv / mse);
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("matrix_sqrt_psd: matrix must be square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8)
    throw std::invalid_argument("matrix_sqrt_psd: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0.0) {
      if (ev[i] < -1e-8 * scale)
        throw std::invalid_argument("matrix_sqrt_psd: matrix is not PSD");
      ev[i] = 0.0;
    }
    ev[i] = std::sqrt(ev[i]);
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
             Eigen::MatrixXd& cov) {
  const auto n = x.rows();
  mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
}

}  // namespace

double fid(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.vectors.cols() != b.vectors.cols())
    throw std::invalid_argument("fid: embedding dimensions differ");
  if (a.vectors.rows() < 2 || b.vectors.rows() < 2)
    throw std::invalid_argument("fid: need at least 2 vectors per set");
  if (!a.vectors.allFinite() || !b.vectors.allFinite())
    throw std::invalid_argument("fid: embeddings must be finite");

  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a.vectors, mu_a, cov_a);
  moments(b.vectors, mu_b, cov_b);

  const Eigen::MatrixXd root_a = matrix_sqrt_psd(cov_a);
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  // Round-off can leave the product slightly asymmetric; resymmetrize.
  inner = 0.5 * (inner + inner.transpose()).eval();
  const Eigen::MatrixXd cross = matrix_sqrt_psd(inner);

  const double mean_term = (mu_a - mu_b).squaredNorm();
  double trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  double value = mean_term + trace_term;
  if (value < 0.0) {
    if (value < -1e-6)
      throw std::runtime_error("fid: negative beyond round-off tolerance");
    value = 0.0;
  }
  return value;
}

double recognition_rate(const std::vector<int>& predicted,
                        const std::vector<int>& truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("recognition_rate: label lists invalid");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace iris
