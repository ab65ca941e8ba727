#ifndef IRIS_OPS_HPP_
#define IRIS_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "iris/rng.hpp"
#include "iris/tensor.hpp"

namespace iris {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <class S>
void accum(typename Tensor<S>::Node& n, const typename Tensor<S>::Array& g) {
  n.accumulate(g);
}

inline void check_same_shape(const std::vector<int>& a,
                             const std::vector<int>& b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

// f maps value -> value; df maps (x, y) -> dy/dx.
template <class S, class F, class DF>
Tensor<S> unary_op(const Tensor<S>& x, F f, DF df) {
  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x}, [df](typename Tensor<S>::Node& n) {
        auto& px = *n.parents[0];
        if (!px.requires_grad) return;
        typename Tensor<S>::Array g(px.size());
        for (long i = 0; i < px.size(); ++i)
          g[i] = n.grad[i] * df(px.values[i], n.values[i]);
        px.accumulate(g);
      });
  for (long i = 0; i < x.size(); ++i) y.values()[i] = f(x.values()[i]);
  return y;
}

template <class S>
Tensor<S> neg(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return -v; }, [](S, S) { return S(-1); });
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return v > S(0) ? v : S(0); },
                  [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope = S(0.2)) {
  return unary_op(x, [slope](S v) { return v > S(0) ? v : slope * v; },
                  [slope](S v, S) { return v > S(0) ? S(1) : slope; });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  auto f = [](S v) {
    if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
    const S e = std::exp(v);
    return e / (S(1) + e);
  };
  return unary_op(x, f, [](S, S y) { return y * (S(1) - y); });
}

// Overflow-safe log(1 + exp(x)).
template <class S>
Tensor<S> softplus(const Tensor<S>& x) {
  auto f = [](S v) {
    const S a = v > S(0) ? v : S(0);
    return a + std::log1p(std::exp(-std::abs(v)));
  };
  auto df = [](S v, S) {
    if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
    const S e = std::exp(v);
    return e / (S(1) + e);
  };
  return unary_op(x, f, df);
}

template <class S>
Tensor<S> square(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return v * v; },
                  [](S v, S) { return S(2) * v; });
}

template <class S>
Tensor<S> sqrt_(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::sqrt(v); },
                  [](S, S y) { return S(0.5) / y; });
}

template <class S>
Tensor<S> exp_(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::exp(v); },
                  [](S, S y) { return y; });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return unary_op(x, [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  return unary_op(x, [c](S v) { return v * c; }, [c](S, S) { return c; });
}

// ---------------------------------------------------------------------------
// Elementwise binary (equal shapes, or one side a 1-element tensor)
// ---------------------------------------------------------------------------

namespace detail {

enum class Bcast { none, left_scalar, right_scalar };

inline Bcast bcast_mode(const std::vector<int>& a, const std::vector<int>& b,
                        const char* op) {
  if (a == b) return Bcast::none;
  long na = 1, nb = 1;
  for (int d : a) na *= d;
  for (int d : b) nb *= d;
  if (na == 1) return Bcast::left_scalar;
  if (nb == 1) return Bcast::right_scalar;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// f(a_i, b_i) -> y_i; dfa/dfb give partials from (a, b, y).
template <class S, class F, class DFA, class DFB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, F f, DFA dfa,
                    DFB dfb, const char* name) {
  const auto mode = detail::bcast_mode(a.shape(), b.shape(), name);
  const std::vector<int>& shape =
      mode == detail::Bcast::left_scalar ? b.shape() : a.shape();

  Tensor<S> y = Tensor<S>::make_op(
      shape, {a, b}, [mode, dfa, dfb](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const long sz = n.size();
        auto aval = [&](long i) {
          return pa.values[mode == detail::Bcast::left_scalar ? 0 : i];
        };
        auto bval = [&](long i) {
          return pb.values[mode == detail::Bcast::right_scalar ? 0 : i];
        };
        if (pa.requires_grad) {
          typename Tensor<S>::Array g =
              Tensor<S>::Array::Zero(pa.size());
          for (long i = 0; i < sz; ++i) {
            const S d = n.grad[i] * dfa(aval(i), bval(i), n.values[i]);
            g[mode == detail::Bcast::left_scalar ? 0 : i] += d;
          }
          pa.accumulate(g);
        }
        if (pb.requires_grad) {
          typename Tensor<S>::Array g =
              Tensor<S>::Array::Zero(pb.size());
          for (long i = 0; i < sz; ++i) {
            const S d = n.grad[i] * dfb(aval(i), bval(i), n.values[i]);
            g[mode == detail::Bcast::right_scalar ? 0 : i] += d;
          }
          pb.accumulate(g);
        }
      });

  const long sz = y.size();
  for (long i = 0; i < sz; ++i) {
    const S av = a.values()[mode == detail::Bcast::left_scalar ? 0 : i];
    const S bv = b.values()[mode == detail::Bcast::right_scalar ? 0 : i];
    y.values()[i] = f(av, bv);
  }
  return y;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x + y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(1); }, "add");
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x - y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(-1); }, "sub");
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x * y; }, [](S, S y, S) { return y; },
      [](S x, S, S) { return x; }, "mul");
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x / y; },
      [](S, S y, S) { return S(1) / y; },
      [](S, S y, S out) { return -out / y; }, "div");
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int> shape) {
  if (Tensor<S>::count(shape) != x.size())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  Tensor<S> y = Tensor<S>::make_op(
      std::move(shape), {x}, [](typename Tensor<S>::Node& n) {
        auto& p = *n.parents[0];
        if (p.requires_grad) p.accumulate(n.grad);
      });
  y.values() = x.values();
  return y;
}

template <class S>
Tensor<S> slice(const Tensor<S>& x, int axis, int start, int len) {
  const auto& sh = x.shape();
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("slice: bad axis");
  if (start < 0 || len < 1 || start + len > sh[axis])
    throw std::invalid_argument("slice: out of range");

  std::vector<int> out_shape = sh;
  out_shape[axis] = len;
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= sh[i];
  const long in_block = static_cast<long>(sh[axis]) * inner;
  const long out_block = static_cast<long>(len) * inner;
  const long off = static_cast<long>(start) * inner;

  Tensor<S> y = Tensor<S>::make_op(
      out_shape, {x},
      [outer, inner, in_block, out_block, off,
       len](typename Tensor<S>::Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g = Tensor<S>::Array::Zero(p.size());
        for (long o = 0; o < outer; ++o)
          g.segment(o * in_block + off, out_block) +=
              n.grad.segment(o * out_block, out_block);
        p.accumulate(g);
      });
  for (long o = 0; o < outer; ++o)
    y.values().segment(o * out_block, out_block) =
        x.values().segment(o * in_block + off, out_block);
  return y;
}

template <class S>
Tensor<S> concat(int axis, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
  std::vector<int> out_shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.shape()[i] != out_shape[i])
        throw std::invalid_argument("concat: shape mismatch");
    total += p.shape()[axis];
  }
  out_shape[axis] = total;

  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];
  std::vector<long> lens;
  for (const auto& p : parts)
    lens.push_back(static_cast<long>(p.shape()[axis]) * inner);
  const long out_block = static_cast<long>(total) * inner;

  Tensor<S> y = Tensor<S>::make_op(
      out_shape, parts,
      [outer, lens, out_block](typename Tensor<S>::Node& n) {
        long off = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          auto& p = *n.parents[k];
          if (p.requires_grad) {
            typename Tensor<S>::Array g(p.size());
            for (long o = 0; o < outer; ++o)
              g.segment(o * lens[k], lens[k]) =
                  n.grad.segment(o * out_block + off, lens[k]);
            p.accumulate(g);
          }
          off += lens[k];
        }
      });
  long off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (long o = 0; o < outer; ++o)
      y.values().segment(o * out_block + off, lens[k]) =
          parts[k].values().segment(o * lens[k], lens[k]);
    off += lens[k];
  }
  return y;
}

template <class S>
Tensor<S> transpose2(const Tensor<S>& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose2: rank != 2");
  const int m = x.dim(0), k = x.dim(1);
  Tensor<S> y = Tensor<S>::make_op(
      {k, m}, {x}, [m, k](typename Tensor<S>::Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j)
            g[static_cast<long>(i) * k + j] =
                n.grad[static_cast<long>(j) * m + i];
        p.accumulate(g);
      });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      y.values()[static_cast<long>(j) * m + i] =
          x.values()[static_cast<long>(i) * k + j];
  return y;
}

// ---------------------------------------------------------------------------
// Reductions and axis ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::make_op(
      {1}, {x}, [](typename Tensor<S>::Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g =
            Tensor<S>::Array::Constant(p.size(), n.grad[0]);
        p.accumulate(g);
      });
  y.values()[0] = x.values().sum();
  return y;
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
  const S inv = S(1) / static_cast<S>(x.size());
  return mul_scalar(sum_all(x), inv);
}

// Sums over every axis except `axis`; result is rank-1 of length shape[axis].
template <class S>
Tensor<S> sum_to_axis(const Tensor<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("sum_to_axis: bad axis");
  const auto st = strides_of(x.shape());
  const long stride = st[axis];
  const int len = x.dim(axis);

  Tensor<S> y = Tensor<S>::make_op(
      {len}, {x}, [stride, len](typename Tensor<S>::Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        for (long i = 0; i < p.size(); ++i)
          g[i] = n.grad[(i / stride) % len];
        p.accumulate(g);
      });
  y.values().setZero();
  for (long i = 0; i < x.size(); ++i)
    y.values()[(i / stride) % len] += x.values()[i];
  return y;
}

// out = x * v[index along axis]; v is rank-1 of length shape[axis].
template <class S>
Tensor<S> scale_axis(const Tensor<S>& x, const Tensor<S>& v, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("scale_axis: bad axis");
  if (v.rank() != 1 || v.dim(0) != x.dim(axis))
    throw std::invalid_argument("scale_axis: vector length mismatch");
  const auto st = strides_of(x.shape());
  const long stride = st[axis];
  const int len = x.dim(axis);

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x, v}, [stride, len](typename Tensor<S>::Node& n) {
        auto& px = *n.parents[0];
        auto& pv = *n.parents[1];
        if (px.requires_grad) {
          typename Tensor<S>::Array g(px.size());
          for (long i = 0; i < px.size(); ++i)
            g[i] = n.grad[i] * pv.values[(i / stride) % len];
          px.accumulate(g);
        }
        if (pv.requires_grad) {
          typename Tensor<S>::Array g = Tensor<S>::Array::Zero(len);
          for (long i = 0; i < px.size(); ++i)
            g[(i / stride) % len] += n.grad[i] * px.values[i];
          pv.accumulate(g);
        }
      });
  for (long i = 0; i < x.size(); ++i)
    y.values()[i] = x.values()[i] * v.values()[(i / stride) % len];
  return y;
}

// out = x + v[index along axis].
template <class S>
Tensor<S> add_axis(const Tensor<S>& x, const Tensor<S>& v, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("add_axis: bad axis");
  if (v.rank() != 1 || v.dim(0) != x.dim(axis))
    throw std::invalid_argument("add_axis: vector length mismatch");
  const auto st = strides_of(x.shape());
  const long stride = st[axis];
  const int len = x.dim(axis);

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x, v}, [stride, len](typename Tensor<S>::Node& n) {
        auto& px = *n.parents[0];
        auto& pv = *n.parents[1];
        if (px.requires_grad) px.accumulate(n.grad);
        if (pv.requires_grad) {
          typename Tensor<S>::Array g = Tensor<S>::Array::Zero(len);
          for (long i = 0; i < n.size(); ++i)
            g[(i / stride) % len] += n.grad[i];
          pv.accumulate(g);
        }
      });
  for (long i = 0; i < x.size(); ++i)
    y.values()[i] = x.values()[i] + v.values()[(i / stride) % len];
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);

  Tensor<S> y = Tensor<S>::make_op(
      {m, n}, {a, b}, [m, k, n](typename Tensor<S>::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        Eigen::Map<const RowMat<S>> G(nd.grad.data(), m, n);
        Eigen::Map<const RowMat<S>> A(pa.values.data(), m, k);
        Eigen::Map<const RowMat<S>> B(pb.values.data(), k, n);
        if (pa.requires_grad) {
          typename Tensor<S>::Array g(pa.size());
          Eigen::Map<RowMat<S>>(g.data(), m, k) = G * B.transpose();
          pa.accumulate(g);
        }
        if (pb.requires_grad) {
          typename Tensor<S>::Array g(pb.size());
          Eigen::Map<RowMat<S>>(g.data(), k, n) = A.transpose() * G;
          pb.accumulate(g);
        }
      });
  Eigen::Map<RowMat<S>>(y.data(), m, n) =
      Eigen::Map<const RowMat<S>>(a.data(), m, k) *
      Eigen::Map<const RowMat<S>>(b.data(), k, n);
  return y;
}

// x: [N, I], w: [I, O], b: [O] (optional, pass undefined Tensor to skip).
template <class S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w,
                          const Tensor<S>& b) {
  Tensor<S> y = matmul(x, w);
  if (b.defined()) y = add_axis(y, b, 1);
  return y;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding)
// ---------------------------------------------------------------------------

namespace detail {

// Patch matrix for one sample: rows = OH*OW, cols = KH*KW*C.
template <class S>
void im2col(const S* x, int h, int w, int c, int kh, int kw, int stride,
            int pad, int oh, int ow, S* out) {
  const long cols = static_cast<long>(kh) * kw * c;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      S* row = out + (static_cast<long>(oy) * ow + ox) * cols;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          S* dst = row + (static_cast<long>(ky) * kw + kx) * c;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
            const S* src = x + (static_cast<long>(iy) * w + ix) * c;
            for (int ci = 0; ci < c; ++ci) dst[ci] = src[ci];
          } else {
            for (int ci = 0; ci < c; ++ci) dst[ci] = S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const S* cols_grad, int h, int w, int c, int kh, int kw,
                int stride, int pad, int oh, int ow, S* dx) {
  const long cols = static_cast<long>(kh) * kw * c;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const S* row = cols_grad + (static_cast<long>(oy) * ow + ox) * cols;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const S* src = row + (static_cast<long>(ky) * kw + kx) * c;
          S* dst = dx + (static_cast<long>(iy) * w + ix) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace detail

// x: [N, H, W, C_in], w: [KH, KW, C_in, C_out], b: [C_out] or undefined.
// pad < 0 selects "same" padding k/2 (odd kernels).
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride = 1, int pad = -1,
                 const std::string& label = "conv2d") {
  if (x.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument(label + ": conv2d wants rank-4 input/weight");
  const int n = x.dim(0), h = x.dim(1), ww = x.dim(2), c = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), ic = w.dim(2), oc = w.dim(3);
  if (ic != c)
    throw std::invalid_argument(label + ": channel mismatch, input " +
                                shape_str(x.shape()) + " vs weight " +
                                shape_str(w.shape()));
  if (pad < 0) pad = kh / 2;
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (ww + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad < kh || ww + 2 * pad < kw)
    throw std::invalid_argument(label + ": kernel larger than padded input");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != oc))
    throw std::invalid_argument(label + ": bias length mismatch");

  const long cols = static_cast<long>(kh) * kw * ic;
  const long orows = static_cast<long>(oh) * ow;

  std::vector<Tensor<S>> parents = {x, w};
  if (b.defined()) parents.push_back(b);

  auto backward = [n, h, ww, c, kh, kw, stride, pad, oh, ow, oc, cols,
                   orows](typename Tensor<S>::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pw = *nd.parents[1];
    const bool has_bias = nd.parents.size() > 2;

    typename Tensor<S>::Array patches(orows * cols);
    typename Tensor<S>::Array dw;
    typename Tensor<S>::Array dx;
    if (pw.requires_grad) dw = Tensor<S>::Array::Zero(pw.size());
    if (px.requires_grad) dx = Tensor<S>::Array::Zero(px.size());

    Eigen::Map<const RowMat<S>> W(pw.values.data(), cols, oc);
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const RowMat<S>> G(nd.grad.data() + i * orows * oc, orows,
                                    oc);
      if (pw.requires_grad || px.requires_grad)
        detail::im2col(px.values.data() + static_cast<long>(i) * h * ww * c, h,
                       ww, c, kh, kw, stride, pad, oh, ow, patches.data());
      if (pw.requires_grad) {
        Eigen::Map<const RowMat<S>> P(patches.data(), orows, cols);
        Eigen::Map<RowMat<S>>(dw.data(), cols, oc).noalias() +=
            P.transpose() * G;
      }
      if (px.requires_grad) {
        RowMat<S> dP = G * W.transpose();
        detail::col2im_add(dP.data(), h, ww, c, kh, kw, stride, pad, oh, ow,
                           dx.data() + static_cast<long>(i) * h * ww * c);
      }
    }
    if (pw.requires_grad) pw.accumulate(dw);
    if (px.requires_grad) px.accumulate(dx);
    if (has_bias) {
      auto& pb = *nd.parents[2];
      if (pb.requires_grad) {
        typename Tensor<S>::Array db = Tensor<S>::Array::Zero(oc);
        for (long i = 0; i < nd.size(); ++i) db[i % oc] += nd.grad[i];
        pb.accumulate(db);
      }
    }
  };

  Tensor<S> y = Tensor<S>::make_op({n, oh, ow, oc}, parents, backward);

  typename Tensor<S>::Array patches(orows * cols);
  Eigen::Map<const RowMat<S>> W(w.data(), cols, oc);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.data() + static_cast<long>(i) * h * ww * c, h, ww, c, kh,
                   kw, stride, pad, oh, ow, patches.data());
    Eigen::Map<const RowMat<S>> P(patches.data(), orows, cols);
    Eigen::Map<RowMat<S>> O(y.data() + i * orows * oc, orows, oc);
    O.noalias() = P * W;
  }
  if (b.defined()) {
    for (long i = 0; i < y.size(); ++i) y.values()[i] += b.values()[i % oc];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling / upsampling
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> max_pool(const Tensor<S>& x, int kernel, int stride) {
  if (x.rank() != 4) throw std::invalid_argument("max_pool: rank-4 input");
  if (kernel < 1 || stride < 1)
    throw std::invalid_argument("max_pool: bad kernel/stride");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (kernel > h || kernel > w)
    throw std::invalid_argument("max_pool: kernel larger than input");
  const int oh = (h - kernel) / stride + 1;
  const int ow = (w - kernel) / stride + 1;

  auto argmax = std::make_shared<std::vector<long>>(
      static_cast<std::size_t>(n) * oh * ow * c);

  Tensor<S> y = Tensor<S>::make_op(
      {n, oh, ow, c}, {x}, [argmax](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g = Tensor<S>::Array::Zero(p.size());
        for (long i = 0; i < nd.size(); ++i) g[(*argmax)[i]] += nd.grad[i];
        p.accumulate(g);
      });

  long oi = 0;
  for (int i = 0; i < n; ++i) {
    const long base = static_cast<long>(i) * h * w * c;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ci = 0; ci < c; ++ci, ++oi) {
          S best = -std::numeric_limits<S>::infinity();
          long best_idx = -1;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride + ky;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride + kx;
              const long idx = base + (static_cast<long>(iy) * w + ix) * c + ci;
              if (x.values()[idx] > best) {
                best = x.values()[idx];
                best_idx = idx;
              }
            }
          }
          y.values()[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }
  return y;
}

template <class S>
Tensor<S> upsample2x_nearest(const Tensor<S>& x) {
  if (x.rank() != 4) throw std::invalid_argument("upsample2x: rank-4 input");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);

  Tensor<S> y = Tensor<S>::make_op(
      {n, 2 * h, 2 * w, c}, {x}, [n, h, w, c](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g = Tensor<S>::Array::Zero(p.size());
        const int oh = 2 * h, ow = 2 * w;
        for (int i = 0; i < n; ++i)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
              for (int ci = 0; ci < c; ++ci)
                g[((static_cast<long>(i) * h + oy / 2) * w + ox / 2) * c + ci] +=
                    nd.grad[((static_cast<long>(i) * oh + oy) * ow + ox) * c +
                            ci];
        p.accumulate(g);
      });
  const int oh = 2 * h, ow = 2 * w;
  for (int i = 0; i < n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ci = 0; ci < c; ++ci)
          y.values()[((static_cast<long>(i) * oh + oy) * ow + ox) * c + ci] =
              x.values()[((static_cast<long>(i) * h + oy / 2) * w + ox / 2) *
                             c +
                         ci];
  return y;
}

// ---------------------------------------------------------------------------
// Normalization, dropout, softmax
// ---------------------------------------------------------------------------

// Normalizes over all axes but the last (channels-last convention). gamma,
// beta: learnable [C]. running_mean/var: [C] state tensors, updated in place
// when training. Inference is a deterministic affine map of the input.
template <class S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, Tensor<S>& running_mean,
                     Tensor<S>& running_var, bool training,
                     S momentum = S(0.1), S eps = S(1e-5)) {
  const int c = x.dim(x.rank() - 1);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c)
    throw std::invalid_argument("batch_norm: channel size mismatch");
  const long m = x.size() / c;

  if (!training) {
    // y = gamma * (x - rm) / sqrt(rv + eps) + beta, rm/rv constant.
    auto scale = std::make_shared<typename Tensor<S>::Array>(c);
    auto shift = std::make_shared<typename Tensor<S>::Array>(c);
    for (int i = 0; i < c; ++i) {
      const S ivr = S(1) / std::sqrt(running_var.values()[i] + eps);
      (*scale)[i] = gamma.values()[i] * ivr;
      (*shift)[i] = beta.values()[i] - running_mean.values()[i] * (*scale)[i];
    }
    auto rm = running_mean.values();  // copy for dgamma
    auto rv = running_var.values();
    Tensor<S> y = Tensor<S>::make_op(
        x.shape(), {x, gamma, beta},
        [c, scale, rm, rv, eps](typename Tensor<S>::Node& nd) {
          auto& px = *nd.parents[0];
          auto& pg = *nd.parents[1];
          auto& pb = *nd.parents[2];
          if (px.requires_grad) {
            typename Tensor<S>::Array g(px.size());
            for (long i = 0; i < px.size(); ++i)
              g[i] = nd.grad[i] * (*scale)[i % c];
            px.accumulate(g);
          }
          if (pg.requires_grad) {
            typename Tensor<S>::Array g = Tensor<S>::Array::Zero(c);
            for (long i = 0; i < nd.size(); ++i) {
              const int ci = static_cast<int>(i % c);
              const S ivr = S(1) / std::sqrt(rv[ci] + eps);
              g[ci] += nd.grad[i] * (px.values[i] - rm[ci]) * ivr;
            }
            pg.accumulate(g);
          }
          if (pb.requires_grad) {
            typename Tensor<S>::Array g = Tensor<S>::Array::Zero(c);
            for (long i = 0; i < nd.size(); ++i) g[i % c] += nd.grad[i];
            pb.accumulate(g);
          }
        });
    for (long i = 0; i < x.size(); ++i)
      y.values()[i] = x.values()[i] * (*scale)[i % c] + (*shift)[i % c];
    return y;
  }

  // Training mode: batch statistics.
  typename Tensor<S>::Array mu = Tensor<S>::Array::Zero(c);
  typename Tensor<S>::Array var = Tensor<S>::Array::Zero(c);
  for (long i = 0; i < x.size(); ++i) mu[i % c] += x.values()[i];
  mu /= static_cast<S>(m);
  for (long i = 0; i < x.size(); ++i) {
    const S d = x.values()[i] - mu[i % c];
    var[i % c] += d * d;
  }
  var /= static_cast<S>(m);

  auto xhat = std::make_shared<typename Tensor<S>::Array>(x.size());
  auto ivar = std::make_shared<typename Tensor<S>::Array>(c);
  for (int i = 0; i < c; ++i) (*ivar)[i] = S(1) / std::sqrt(var[i] + eps);
  for (long i = 0; i < x.size(); ++i)
    (*xhat)[i] = (x.values()[i] - mu[i % c]) * (*ivar)[i % c];

  // Running statistics (unbiased variance when m > 1).
  const S unbias = m > 1 ? static_cast<S>(m) / static_cast<S>(m - 1) : S(1);
  for (int i = 0; i < c; ++i) {
    running_mean.values()[i] =
        (S(1) - momentum) * running_mean.values()[i] + momentum * mu[i];
    running_var.values()[i] = (S(1) - momentum) * running_var.values()[i] +
                              momentum * var[i] * unbias;
  }

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x, gamma, beta},
      [c, m, xhat, ivar](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        auto& pg = *nd.parents[1];
        auto& pb = *nd.parents[2];
        typename Tensor<S>::Array sum_g = Tensor<S>::Array::Zero(c);
        typename Tensor<S>::Array sum_gx = Tensor<S>::Array::Zero(c);
        for (long i = 0; i < nd.size(); ++i) {
          sum_g[i % c] += nd.grad[i];
          sum_gx[i % c] += nd.grad[i] * (*xhat)[i];
        }
        if (px.requires_grad) {
          typename Tensor<S>::Array g(px.size());
          const S im = S(1) / static_cast<S>(m);
          for (long i = 0; i < px.size(); ++i) {
            const int ci = static_cast<int>(i % c);
            g[i] = pg.values[ci] * (*ivar)[ci] * im *
                   (static_cast<S>(m) * nd.grad[i] - sum_g[ci] -
                    (*xhat)[i] * sum_gx[ci]);
          }
          px.accumulate(g);
        }
        if (pg.requires_grad) pg.accumulate(sum_gx);
        if (pb.requires_grad) pb.accumulate(sum_g);
      });
  for (long i = 0; i < x.size(); ++i)
    y.values()[i] =
        gamma.values()[i % c] * (*xhat)[i] + beta.values()[i % c];
  return y;
}

// Inverted dropout; identity when not training. The mask is a pure function
// of `seed`, so replaying a forward pass reproduces it exactly.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double rate, std::uint64_t seed,
                  bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;

  auto mask = std::make_shared<typename Tensor<S>::Array>(x.size());
  Rng rng(Rng::mix(seed, Rng::hash("dropout")));
  const double keep = 1.0 - rate;
  const S inv_keep = static_cast<S>(1.0 / keep);
  for (long i = 0; i < x.size(); ++i)
    (*mask)[i] = rng.uniform() < keep ? inv_keep : S(0);

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x}, [mask](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        for (long i = 0; i < p.size(); ++i) g[i] = nd.grad[i] * (*mask)[i];
        p.accumulate(g);
      });
  for (long i = 0; i < x.size(); ++i)
    y.values()[i] = x.values()[i] * (*mask)[i];
  return y;
}

template <class S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  const int k = x.dim(x.rank() - 1);
  const long rows = x.size() / k;

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x}, [k, rows](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        for (long r = 0; r < rows; ++r) {
          const long off = r * k;
          S dot = S(0);
          for (int i = 0; i < k; ++i)
            dot += nd.grad[off + i] * nd.values[off + i];
          for (int i = 0; i < k; ++i)
            g[off + i] = nd.values[off + i] * (nd.grad[off + i] - dot);
        }
        p.accumulate(g);
      });
  for (long r = 0; r < rows; ++r) {
    const long off = r * k;
    S mx = x.values()[off];
    for (int i = 1; i < k; ++i) mx = std::max(mx, x.values()[off + i]);
    S sum = S(0);
    for (int i = 0; i < k; ++i) {
      y.values()[off + i] = std::exp(x.values()[off + i] - mx);
      sum += y.values()[off + i];
    }
    for (int i = 0; i < k; ++i) y.values()[off + i] /= sum;
  }
  return y;
}

// Mean negative log-likelihood of softmax(logits) at the given labels.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits,
                        const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label out of range");

  auto probs = std::make_shared<typename Tensor<S>::Array>(logits.size());
  auto labels_copy = std::make_shared<std::vector<int>>(labels);

  Tensor<S> out = Tensor<S>::make_op(
      {1}, {logits}, [n, k, probs, labels_copy](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        const S scale = nd.grad[0] / static_cast<S>(n);
        for (int r = 0; r < n; ++r)
          for (int i = 0; i < k; ++i)
            g[static_cast<long>(r) * k + i] =
                scale * ((*probs)[static_cast<long>(r) * k + i] -
                         (i == (*labels_copy)[r] ? S(1) : S(0)));
        p.accumulate(g);
      });

  S total = S(0);
  for (int r = 0; r < n; ++r) {
    const long off = static_cast<long>(r) * k;
    S mx = logits.values()[off];
    for (int i = 1; i < k; ++i) mx = std::max(mx, logits.values()[off + i]);
    S sum = S(0);
    for (int i = 0; i < k; ++i) {
      (*probs)[off + i] = std::exp(logits.values()[off + i] - mx);
      sum += (*probs)[off + i];
    }
    for (int i = 0; i < k; ++i) (*probs)[off + i] /= sum;
    total += -(std::log((*probs)[off + labels[r]]));
  }
  out.values()[0] = total / static_cast<S>(n);
  return out;
}

// Rows of x scaled to unit L2 norm; accepts [D] or [N, D].
template <class S>
Tensor<S> l2_normalize_rows(const Tensor<S>& x) {
  const int d = x.dim(x.rank() - 1);
  const long rows = x.size() / d;

  auto norms = std::make_shared<typename Tensor<S>::Array>(rows);
  for (long r = 0; r < rows; ++r) {
    S s = S(0);
    for (int i = 0; i < d; ++i) {
      const S v = x.values()[r * d + i];
      s += v * v;
    }
    const S nrm = std::sqrt(s);
    if (!(nrm > S(0)))
      throw std::invalid_argument("l2_normalize_rows: zero-norm row");
    (*norms)[r] = nrm;
  }

  Tensor<S> y = Tensor<S>::make_op(
      x.shape(), {x}, [d, rows, norms](typename Tensor<S>::Node& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        typename Tensor<S>::Array g(p.size());
        for (long r = 0; r < rows; ++r) {
          const long off = r * d;
          S dot = S(0);
          for (int i = 0; i < d; ++i)
            dot += nd.grad[off + i] * nd.values[off + i];
          const S inv = S(1) / (*norms)[r];
          for (int i = 0; i < d; ++i)
            g[off + i] = (nd.grad[off + i] - nd.values[off + i] * dot) * inv;
        }
        p.accumulate(g);
      });
  for (long r = 0; r < rows; ++r)
    for (int i = 0; i < d; ++i)
      y.values()[r * d + i] = x.values()[r * d + i] / (*norms)[r];
  return y;
}

// Mean elementwise Huber with unit threshold.
template <class S>
Tensor<S> smooth_l1_loss(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "smooth_l1");
  const long n = a.size();

  Tensor<S> y = Tensor<S>::make_op(
      {1}, {a, b}, [n](typename Tensor<S>::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        const S scale = nd.grad[0] / static_cast<S>(n);
        typename Tensor<S>::Array g(n);
        for (long i = 0; i < n; ++i) {
          const S d = pa.values[i] - pb.values[i];
          g[i] = scale * (d > S(1) ? S(1) : (d < S(-1) ? S(-1) : d));
        }
        if (pa.requires_grad) pa.accumulate(g);
        if (pb.requires_grad) pb.accumulate(-g);
      });
  S total = S(0);
  for (long i = 0; i < n; ++i) {
    const S d = a.values()[i] - b.values()[i];
    const S ad = std::abs(d);
    total += ad < S(1) ? S(0.5) * d * d : ad - S(0.5);
  }
  y.values()[0] = total / static_cast<S>(n);
  return y;
}

}  // namespace iris

#endif  // IRIS_OPS_HPP_
