#ifndef IRIS_TESTS_GRADCHECK_HPP_
#define IRIS_TESTS_GRADCHECK_HPP_

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "iris/rng.hpp"
#include "iris/tensor.hpp"

namespace iris::testing {

struct GradCheck {
  double rel_tol = 1e-4;
  double abs_floor = 1e-8;  // treat |analytic - fd| below this as zero
  double step = 1e-5;
  int coords_per_tensor = 6;

  std::string last_error;

  // loss_fn rebuilds the forward pass each call and returns a scalar tensor.
  // `params` are the leaf tensors the closure reads; their values get
  // perturbed in place. Central differences at 64-bit.
  bool run(const std::function<Tensor<double>()>& loss_fn,
           const std::vector<Tensor<double>>& params, Rng& rng) {
    for (auto p : params) p.zero_grad();
    Tensor<double> loss = loss_fn();
    loss.backward();

    std::vector<Eigen::ArrayXd> analytic;
    for (const auto& p : params) {
      auto node = p.node();
      analytic.push_back(node->grad.size() ? node->grad
                                           : Eigen::ArrayXd::Zero(p.size()));
    }

    for (std::size_t t = 0; t < params.size(); ++t) {
      Tensor<double> p = params[t];
      const long n = p.size();
      const int checks =
          n <= coords_per_tensor ? static_cast<int>(n) : coords_per_tensor;
      for (int k = 0; k < checks; ++k) {
        const long i =
            n <= coords_per_tensor
                ? k
                : static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const double old = p.values()[i];
        p.values()[i] = old + step;
        const double fp = loss_fn().value();
        p.values()[i] = old - step;
        const double fm = loss_fn().value();
        p.values()[i] = old;

        const double fd = (fp - fm) / (2.0 * step);
        const double an = analytic[t][i];
        const double diff = std::abs(an - fd);
        const double denom = std::max(std::abs(an), std::abs(fd));
        if (diff > abs_floor && diff / denom > rel_tol) {
          std::ostringstream os;
          os << "gradient mismatch: tensor " << t << " coord " << i
             << " analytic " << an << " fd " << fd << " rel "
             << diff / denom;
          last_error = os.str();
          return false;
        }
      }
    }
    return true;
  }
};

// Fills a tensor with N(0, scale) values from the rng.
template <class S>
void randomize(Tensor<S>& t, Rng& rng, double scale = 1.0) {
  for (long i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<S>(rng.normal() * scale);
}

}  // namespace iris::testing

#endif  // IRIS_TESTS_GRADCHECK_HPP_
