#ifndef IRIS_LOSSES_HPP_
#define IRIS_LOSSES_HPP_

#include "iris/ops.hpp"

namespace iris {

struct LossWeights {
  double w_adv = 1.0;
  double w_l1 = 1.0;
  double w_id = 1.0;

  void validate() const {
    if (!(w_adv >= 0.0) || !(w_l1 >= 0.0) || !(w_id >= 0.0))
      throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
};

// Non-saturating logistic generator loss: mean softplus(-D(G(x))).
template <class S>
Tensor<S> adv_generator_loss(const Tensor<S>& d_fake) {
  return mean_all(softplus(neg(d_fake)));
}

// Logistic discriminator loss: mean softplus(-D(real)) + mean softplus(D(fake)).
template <class S>
Tensor<S> adv_discriminator_loss(const Tensor<S>& d_real,
                                 const Tensor<S>& d_fake) {
  return add(mean_all(softplus(neg(d_real))), mean_all(softplus(d_fake)));
}

// Mean elementwise Huber with unit threshold.
template <class S>
Tensor<S> smooth_l1(const Tensor<S>& x, const Tensor<S>& y) {
  return smooth_l1_loss(x, y);
}

// One minus the cosine similarity of the two features; both sides are
// L2-normalized at the point of use, so the result lies in [0, 2].
// Accepts [D] vectors or [N, D] batches (mean over the batch).
template <class S>
Tensor<S> identity_loss(const Tensor<S>& f_real, const Tensor<S>& f_fake) {
  if (f_real.shape() != f_fake.shape())
    throw std::invalid_argument("identity_loss: shape mismatch");
  const int d = f_real.dim(f_real.rank() - 1);
  const long rows = f_real.size() / d;
  Tensor<S> a = l2_normalize_rows(f_real);
  Tensor<S> b = l2_normalize_rows(f_fake);
  Tensor<S> prod = mul(a, b);
  Tensor<S> dots =
      rows == 1 ? sum_all(prod) : sum_to_axis(reshape(prod, {static_cast<int>(rows), d}), 0);
  return add_scalar(neg(mean_all(dots)), S(1));
}

// Total generator objective: weighted adversarial + smooth L1 + identity.
template <class S>
Tensor<S> total_generator_loss(const LossWeights& w, const Tensor<S>& d_fake,
                               const Tensor<S>& hq, const Tensor<S>& restored,
                               const Tensor<S>& f_real,
                               const Tensor<S>& f_fake) {
  w.validate();
  Tensor<S> total = mul_scalar(adv_generator_loss(d_fake), S(w.w_adv));
  total = add(total, mul_scalar(smooth_l1(restored, hq), S(w.w_l1)));
  total = add(total, mul_scalar(identity_loss(f_real, f_fake), S(w.w_id)));
  return total;
}

}  // namespace iris

#endif  // IRIS_LOSSES_HPP_
