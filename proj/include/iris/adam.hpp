#ifndef IRIS_ADAM_HPP_
#define IRIS_ADAM_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "iris/tensor.hpp"

namespace iris {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over named parameter groups; each group carries
// its own learning rate. Parameters with no accumulated gradient are left
// untouched by a step.
template <class S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void add_group(const std::vector<Tensor<S>*>& params, double lr,
                 const std::string& tag = "") {
    for (Tensor<S>* p : params) {
      Slot s;
      s.param = *p;
      s.lr = lr;
      s.tag = tag;
      s.m = Tensor<S>::Array::Zero(p->size());
      s.v = Tensor<S>::Array::Zero(p->size());
      slots_.push_back(std::move(s));
    }
  }

  std::uint64_t step_count() const { return step_; }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  void step() {
    ++step_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S eps = static_cast<S>(cfg_.epsilon);
    const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, step_));
    const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, step_));
    for (auto& s : slots_) {
      auto node = s.param.node();
      if (node->grad.size() == 0) continue;
      const S lr = static_cast<S>(s.lr);
      for (long i = 0; i < node->size(); ++i) {
        const S g = node->grad[i];
        s.m[i] = b1 * s.m[i] + (S(1) - b1) * g;
        s.v[i] = b2 * s.v[i] + (S(1) - b2) * g * g;
        const S mhat = s.m[i] / bc1;
        const S vhat = s.v[i] / bc2;
        node->values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  struct Slot {
    Tensor<S> param;
    typename Tensor<S>::Array m, v;
    double lr = 0.0;
    std::string tag;
  };

  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t step_ = 0;
};

}  // namespace iris

#endif  // IRIS_ADAM_HPP_
