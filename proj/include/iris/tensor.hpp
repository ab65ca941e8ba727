#ifndef IRIS_TENSOR_HPP_
#define IRIS_TENSOR_HPP_

#include <Eigen/Dense>
#include <cassert>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace iris {

// Global switch for gradient recording; inference paths disable it.
inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense N-dimensional array over a flat Eigen buffer (row-major index
// order), carrying an optional reverse-mode tape node. Ops that build new
// tensors attach a backward closure that accumulates into parents' grads.
template <class S>
class Tensor {
 public:
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  struct Node {
    std::vector<int> shape;
    Array values;
    Array grad;  // size 0 until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    long size() const { return values.size(); }
    void accumulate(const Array& g) {
      if (grad.size() == 0) grad = Array::Zero(values.size());
      grad += g;
    }
  };

  Tensor() = default;

  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : n_(std::make_shared<Node>()) {
    n_->shape = std::move(shape);
    n_->values = Array::Zero(count(n_->shape));
    n_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, S v) {
    Tensor t(std::move(shape));
    t.n_->values.setConstant(v);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from_data(std::vector<int> shape, const std::vector<S>& data) {
    Tensor t(std::move(shape));
    if (static_cast<long>(data.size()) != t.size())
      throw std::invalid_argument("from_data: size mismatch");
    for (long i = 0; i < t.size(); ++i) t.n_->values[i] = data[i];
    return t;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[i]; }
  long size() const { return n_->values.size(); }

  Array& values() { return n_->values; }
  const Array& values() const { return n_->values; }
  S* data() { return n_->values.data(); }
  const S* data() const { return n_->values.data(); }

  S value() const {
    if (size() != 1) throw std::logic_error("value() needs a 1-element tensor");
    return n_->values[0];
  }

  S& at(std::initializer_list<int> idx) { return n_->values[offset(idx)]; }
  S at(std::initializer_list<int> idx) const { return n_->values[offset(idx)]; }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }

  Array& grad() {
    if (n_->grad.size() == 0) n_->grad = Array::Zero(size());
    return n_->grad;
  }
  void zero_grad() { n_->grad.resize(0); }

  // Value copy detached from the tape.
  Tensor detach() const {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = n_->shape;
    t.n_->values = n_->values;
    return t;
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Reverse pass from a scalar. Topological order by iterative DFS.
  void backward() {
    if (size() != 1)
      throw std::logic_error("backward() needs a scalar tensor");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    // `order` is children-after-parents; walk it from the end.
    n_->grad = Array::Ones(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backward && node->grad.size() != 0) node->backward(*node);
    }
  }

  // Builds an op result; records the tape edge only when gradients are both
  // enabled and reachable from the parents.
  static Tensor make_op(std::vector<int> shape,
                        std::vector<Tensor> parents,
                        std::function<void(Node&)> backward) {
    Tensor t(std::move(shape));
    bool need = false;
    if (g_grad_enabled)
      for (const auto& p : parents) need = need || p.requires_grad();
    if (need) {
      t.n_->requires_grad = true;
      t.n_->parents.reserve(parents.size());
      for (auto& p : parents) t.n_->parents.push_back(p.n_);
      t.n_->backward = std::move(backward);
    }
    return t;
  }

  static long count(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

 private:
  long offset(std::initializer_list<int> idx) const {
    assert(static_cast<int>(idx.size()) == rank());
    long off = 0;
    int i = 0;
    for (int v : idx) {
      off = off * n_->shape[i] + v;
      ++i;
    }
    return off;
  }

  std::shared_ptr<Node> n_;
};

// Row-major strides.
inline std::vector<long> strides_of(const std::vector<int>& shape) {
  std::vector<long> st(shape.size());
  long acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= shape[i];
  }
  return st;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace iris

#endif  // IRIS_TENSOR_HPP_
