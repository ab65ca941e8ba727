#ifndef IRIS_BLOCKS_HPP_
#define IRIS_BLOCKS_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "iris/ops.hpp"
#include "iris/rng.hpp"
#include "iris/tensor.hpp"

namespace iris {

// Named parameter arrays for one model family. Entries keep insertion order
// so checkpoints and optimizer sweeps are deterministic.
template <class S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> tensor;
  };

  Tensor<S>& create(const std::string& name, std::vector<int> shape,
                    bool requires_grad = true) {
    if (index_.count(name))
      throw std::invalid_argument("parameter already exists: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Tensor<S>(std::move(shape), requires_grad)});
    return entries_.back().tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }
  const Tensor<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Tensor<S>*> group(const std::string& prefix) {
    std::vector<Tensor<S>*> out;
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) out.push_back(&e.tensor);
    return out;
  }

  void set_requires_grad(const std::string& prefix, bool v) {
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) e.tensor.set_requires_grad(v);
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// --- initialization helpers: N(0, 1/sqrt(fan_in)) weights, zero biases ---

template <class S>
Tensor<S>& init_normal(ParamStore<S>& ps, const std::string& name,
                       std::vector<int> shape, long fan_in, Rng& rng) {
  Tensor<S>& t = ps.create(name, std::move(shape));
  Rng r = rng.fork(name);
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (long i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<S>(r.normal() * scale);
  return t;
}

template <class S>
void init_conv(ParamStore<S>& ps, const std::string& prefix, int kernel,
               int in_ch, int out_ch, Rng& rng, bool bias = true) {
  init_normal(ps, prefix + ".w", {kernel, kernel, in_ch, out_ch},
              static_cast<long>(kernel) * kernel * in_ch, rng);
  if (bias) ps.create(prefix + ".b", {out_ch});
}

template <class S>
void init_dense(ParamStore<S>& ps, const std::string& prefix, int in_dim,
                int out_dim, Rng& rng, bool bias = true) {
  init_normal(ps, prefix + ".w", {in_dim, out_dim}, in_dim, rng);
  if (bias) ps.create(prefix + ".b", {out_dim});
}

template <class S>
void init_bn(ParamStore<S>& ps, const std::string& prefix, int channels) {
  ps.create(prefix + ".gamma", {channels}).values().setConstant(S(1));
  ps.create(prefix + ".beta", {channels});
  ps.create(prefix + ".rm", {channels}, /*requires_grad=*/false);
  ps.create(prefix + ".rv", {channels}, /*requires_grad=*/false)
      .values()
      .setConstant(S(1));
}

template <class S>
Tensor<S> bn_forward(ParamStore<S>& ps, const std::string& prefix,
                     const Tensor<S>& x, bool training) {
  return batch_norm(x, ps.get(prefix + ".gamma"), ps.get(prefix + ".beta"),
                    ps.get(prefix + ".rm"), ps.get(prefix + ".rv"), training);
}

// ---------------------------------------------------------------------------
// Layer catalogue
// ---------------------------------------------------------------------------

enum class LayerKind {
  conv2d,
  batch_norm,
  relu,
  max_pool,
  fully_connected,
  dropout,
  flatten,
  softmax
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int filters = 0;  // conv2d / fully_connected output width
  int kernel = 0;   // conv2d / max_pool
  int stride = 1;
  int pad = -1;  // conv2d; -1 selects kernel/2
  double rate = 0.0;  // dropout

  static LayerSpec conv(int filters, int kernel, int stride, int pad = -1) {
    return {LayerKind::conv2d, filters, kernel, stride, pad, 0.0};
  }
  static LayerSpec dense(int filters) {
    return {LayerKind::fully_connected, filters, 0, 1, -1, 0.0};
  }
  static LayerSpec pool(int kernel, int stride) {
    return {LayerKind::max_pool, 0, kernel, stride, -1, 0.0};
  }
};

// Output shape as a total function of input shape and hyperparameters.
inline std::vector<int> layer_output_shape(const LayerSpec& spec,
                                           const std::vector<int>& in) {
  auto need_rank = [&](int r, const char* what) {
    if (static_cast<int>(in.size()) != r)
      throw std::invalid_argument(std::string(what) + ": wants rank " +
                                  std::to_string(r) + " input, got " +
                                  shape_str(in));
  };
  switch (spec.kind) {
    case LayerKind::conv2d: {
      need_rank(4, "conv2d");
      const int p = spec.pad < 0 ? spec.kernel / 2 : spec.pad;
      const int oh = (in[1] + 2 * p - spec.kernel) / spec.stride + 1;
      const int ow = (in[2] + 2 * p - spec.kernel) / spec.stride + 1;
      if (oh < 1 || ow < 1)
        throw std::invalid_argument("conv2d: kernel larger than input");
      return {in[0], oh, ow, spec.filters};
    }
    case LayerKind::max_pool: {
      need_rank(4, "max_pool");
      const int oh = (in[1] - spec.kernel) / spec.stride + 1;
      const int ow = (in[2] - spec.kernel) / spec.stride + 1;
      if (oh < 1 || ow < 1)
        throw std::invalid_argument("max_pool: kernel larger than input");
      return {in[0], oh, ow, in[3]};
    }
    case LayerKind::fully_connected: {
      need_rank(2, "fully_connected");
      return {in[0], spec.filters};
    }
    case LayerKind::flatten: {
      long rest = 1;
      for (std::size_t i = 1; i < in.size(); ++i) rest *= in[i];
      return {in[0], static_cast<int>(rest)};
    }
    default:
      return in;
  }
}

template <class S>
void layer_init(const LayerSpec& spec, const std::vector<int>& in_shape,
                ParamStore<S>& ps, const std::string& prefix, Rng& rng) {
  switch (spec.kind) {
    case LayerKind::conv2d:
      init_conv(ps, prefix, spec.kernel, in_shape[3], spec.filters, rng);
      break;
    case LayerKind::fully_connected:
      init_dense(ps, prefix, in_shape[1], spec.filters, rng);
      break;
    case LayerKind::batch_norm:
      init_bn<S>(ps, prefix, in_shape.back());
      break;
    default:
      break;  // parameter-free
  }
}

template <class S>
Tensor<S> layer_forward(const LayerSpec& spec, const Tensor<S>& input,
                        ParamStore<S>& ps, const std::string& prefix,
                        bool training = false, std::uint64_t dropout_seed = 0) {
  switch (spec.kind) {
    case LayerKind::conv2d:
      return conv2d(input, ps.get(prefix + ".w"), ps.get(prefix + ".b"),
                    spec.stride, spec.pad, prefix);
    case LayerKind::batch_norm:
      return bn_forward(ps, prefix, input, training);
    case LayerKind::relu:
      return relu(input);
    case LayerKind::max_pool:
      return max_pool(input, spec.kernel, spec.stride);
    case LayerKind::fully_connected:
      return fully_connected(input, ps.get(prefix + ".w"),
                             ps.get(prefix + ".b"));
    case LayerKind::dropout:
      return dropout(input, spec.rate, dropout_seed, training);
    case LayerKind::flatten:
      return reshape(input, layer_output_shape(spec, input.shape()));
    case LayerKind::softmax:
      return softmax_lastdim(input);
  }
  throw std::logic_error("unreachable layer kind");
}

// ---------------------------------------------------------------------------
// Multi-head spatial self-attention over a feature map
// ---------------------------------------------------------------------------

struct AttentionConfig {
  int in_channels = 0;
  int heads = 4;
  int dim_per_head = 0;  // 0 resolves to max(1, in_channels / heads)

  int resolved_dim() const {
    if (dim_per_head > 0) return dim_per_head;
    return in_channels >= heads ? in_channels / heads : 1;
  }
  void validate() const {
    if (in_channels < 1 || heads < 1 || resolved_dim() < 1)
      throw std::invalid_argument("attention: bad configuration");
  }
};

template <class S>
void attention_init(const AttentionConfig& cfg, ParamStore<S>& ps,
                    const std::string& prefix, Rng& rng) {
  cfg.validate();
  const int qkv = cfg.heads * cfg.resolved_dim();
  init_conv(ps, prefix + ".q", 1, cfg.in_channels, qkv, rng);
  init_conv(ps, prefix + ".k", 1, cfg.in_channels, qkv, rng);
  init_conv(ps, prefix + ".v", 1, cfg.in_channels, qkv, rng);
  init_conv(ps, prefix + ".o", 1, qkv, cfg.in_channels, rng);
}

// Q/K/V from 1x1 convolutions; per head, scores over the H*W spatial
// positions are softmax-normalized along the key axis and applied to V;
// heads are concatenated, fused by a 1x1 convolution, and added back to the
// input through a residual connection. Output shape equals input shape.
template <class S>
Tensor<S> attention_forward(const AttentionConfig& cfg, const Tensor<S>& x,
                            ParamStore<S>& ps, const std::string& prefix) {
  if (x.rank() != 4 || x.dim(3) != cfg.in_channels)
    throw std::invalid_argument(prefix + ": attention channel mismatch, got " +
                                shape_str(x.shape()));
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int heads = cfg.heads, dim = cfg.resolved_dim();
  const int l = h * w;

  Tensor<S> q = conv2d(x, ps.get(prefix + ".q.w"), ps.get(prefix + ".q.b"), 1,
                       0, prefix + ".q");
  Tensor<S> k = conv2d(x, ps.get(prefix + ".k.w"), ps.get(prefix + ".k.b"), 1,
                       0, prefix + ".k");
  Tensor<S> v = conv2d(x, ps.get(prefix + ".v.w"), ps.get(prefix + ".v.b"), 1,
                       0, prefix + ".v");

  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dim)));
  std::vector<Tensor<S>> per_sample;
  per_sample.reserve(b);
  for (int i = 0; i < b; ++i) {
    Tensor<S> qi = reshape(slice(q, 0, i, 1), {l, heads * dim});
    Tensor<S> ki = reshape(slice(k, 0, i, 1), {l, heads * dim});
    Tensor<S> vi = reshape(slice(v, 0, i, 1), {l, heads * dim});
    std::vector<Tensor<S>> head_out;
    head_out.reserve(heads);
    for (int hd = 0; hd < heads; ++hd) {
      Tensor<S> qh = slice(qi, 1, hd * dim, dim);
      Tensor<S> kh = slice(ki, 1, hd * dim, dim);
      Tensor<S> vh = slice(vi, 1, hd * dim, dim);
      Tensor<S> scores = mul_scalar(matmul(qh, transpose2(kh)), scale);
      Tensor<S> att = softmax_lastdim(scores);  // keys on the last axis
      head_out.push_back(matmul(att, vh));      // [l, dim]
    }
    per_sample.push_back(reshape(concat(1, head_out), {1, h, w, heads * dim}));
  }
  Tensor<S> merged = concat(0, per_sample);
  Tensor<S> fused = conv2d(merged, ps.get(prefix + ".o.w"),
                           ps.get(prefix + ".o.b"), 1, 0, prefix + ".o");
  return add(x, fused);
}

// ---------------------------------------------------------------------------
// Style-modulated decoder block
// ---------------------------------------------------------------------------

struct StyleBlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  int style_dim = 0;
  bool upsample = false;
  int noise_channels = 0;  // channels of the injected encoder skip map
  bool demodulate = true;
};

template <class S>
void style_block_init(const StyleBlockConfig& cfg, ParamStore<S>& ps,
                      const std::string& prefix, Rng& rng) {
  init_dense(ps, prefix + ".affine", cfg.style_dim, cfg.in_channels, rng);
  ps.get(prefix + ".affine.b").values().setConstant(S(1));
  init_conv(ps, prefix + ".conv", 3, cfg.in_channels, cfg.out_channels, rng);
  init_conv(ps, prefix + ".noise", 1, cfg.noise_channels, cfg.out_channels,
            rng, /*bias=*/false);
}

// Weight-modulated 3x3 convolution: the kernel is scaled per input channel
// by an affine map of the style vector, then (optionally) demodulated by the
// per-output-channel L2 norm. The encoder skip map enters as a learned 1x1
// projection added to the convolution output; activation is leaky-relu 0.2.
template <class S>
Tensor<S> style_block_forward(const StyleBlockConfig& cfg,
                              const Tensor<S>& features,
                              const Tensor<S>& style_w,
                              const Tensor<S>& skip_noise, ParamStore<S>& ps,
                              const std::string& prefix) {
  if (features.rank() != 4 || features.dim(3) != cfg.in_channels)
    throw std::invalid_argument(prefix + ": feature channel mismatch, got " +
                                shape_str(features.shape()));
  const int b = features.dim(0);

  Tensor<S> style2d = style_w.rank() == 1
                          ? reshape(style_w, {1, style_w.dim(0)})
                          : style_w;
  if (style2d.dim(1) != cfg.style_dim)
    throw std::invalid_argument(prefix + ": style vector length mismatch");
  const int style_rows = style2d.dim(0);

  // [rows, in_channels] per-channel modulation scales.
  Tensor<S> scales = fully_connected(style2d, ps.get(prefix + ".affine.w"),
                                     ps.get(prefix + ".affine.b"));

  Tensor<S> x = cfg.upsample ? upsample2x_nearest(features) : features;
  if (skip_noise.rank() != 4 || skip_noise.dim(0) != b ||
      skip_noise.dim(1) != x.dim(1) || skip_noise.dim(2) != x.dim(2) ||
      skip_noise.dim(3) != cfg.noise_channels)
    throw std::invalid_argument(
        prefix + ": skip map " + shape_str(skip_noise.shape()) +
        " does not match block output " + shape_str(x.shape()));

  const Tensor<S>& base_w = ps.get(prefix + ".conv.w");
  const Tensor<S>& bias = ps.get(prefix + ".conv.b");
  constexpr S kDemodEps = S(1e-8);

  std::vector<Tensor<S>> outs;
  outs.reserve(b);
  for (int i = 0; i < b; ++i) {
    const int row = style_rows == 1 ? 0 : i;
    Tensor<S> s_i = reshape(slice(scales, 0, row, 1), {cfg.in_channels});
    Tensor<S> wmod = scale_axis(base_w, s_i, 2);
    if (cfg.demodulate) {
      Tensor<S> ss = sum_to_axis(square(wmod), 3);
      Tensor<S> inv = div(Tensor<S>::scalar(S(1)),
                          sqrt_(add_scalar(ss, kDemodEps)));
      wmod = scale_axis(wmod, inv, 3);
    }
    outs.push_back(conv2d(slice(x, 0, i, 1), wmod, bias, 1, 1, prefix));
  }
  Tensor<S> y = b == 1 ? outs[0] : concat(0, outs);
  Tensor<S> injected = conv2d(skip_noise, ps.get(prefix + ".noise.w"),
                              Tensor<S>(), 1, 0, prefix + ".noise");
  return leaky_relu(add(y, injected), S(0.2));
}

// ---------------------------------------------------------------------------
// Residual bottleneck block
// ---------------------------------------------------------------------------

struct BottleneckConfig {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;  // 1 or 2
};

template <class S>
void bottleneck_init(const BottleneckConfig& cfg, ParamStore<S>& ps,
                     const std::string& prefix, Rng& rng) {
  if (cfg.stride != 1 && cfg.stride != 2)
    throw std::invalid_argument("bottleneck: stride must be 1 or 2");
  init_conv(ps, prefix + ".sc.conv", 1, cfg.in_channels, cfg.out_channels,
            rng, /*bias=*/false);
  init_bn<S>(ps, prefix + ".sc.bn", cfg.out_channels);
  init_bn<S>(ps, prefix + ".res.bn1", cfg.in_channels);
  init_conv(ps, prefix + ".res.conv1", 3, cfg.in_channels, cfg.out_channels,
            rng, /*bias=*/false);
  init_bn<S>(ps, prefix + ".res.bn2", cfg.out_channels);
  init_conv(ps, prefix + ".res.conv2", 3, cfg.out_channels, cfg.out_channels,
            rng, /*bias=*/false);
  init_bn<S>(ps, prefix + ".res.bn3", cfg.out_channels);
}

// Shortcut: max-pool (kernel 1, stride s) -> 1x1 conv -> batch norm.
// Residual: bn -> 3x3 conv (stride 1) -> bn -> relu -> 3x3 conv (stride s)
// -> bn. Output is their sum; spatial dims become ceil(input / stride).
template <class S>
Tensor<S> bottleneck_forward(const BottleneckConfig& cfg, const Tensor<S>& x,
                             ParamStore<S>& ps, const std::string& prefix,
                             bool training = false) {
  if (x.rank() != 4 || x.dim(3) != cfg.in_channels)
    throw std::invalid_argument(prefix + ": bottleneck channel mismatch, got " +
                                shape_str(x.shape()));
  Tensor<S> sc = max_pool(x, 1, cfg.stride);
  sc = conv2d(sc, ps.get(prefix + ".sc.conv.w"), Tensor<S>(), 1, 0,
              prefix + ".sc.conv");
  sc = bn_forward(ps, prefix + ".sc.bn", sc, training);

  Tensor<S> r = bn_forward(ps, prefix + ".res.bn1", x, training);
  r = conv2d(r, ps.get(prefix + ".res.conv1.w"), Tensor<S>(), 1, 1,
             prefix + ".res.conv1");
  r = bn_forward(ps, prefix + ".res.bn2", r, training);
  r = relu(r);
  r = conv2d(r, ps.get(prefix + ".res.conv2.w"), Tensor<S>(), cfg.stride, 1,
             prefix + ".res.conv2");
  r = bn_forward(ps, prefix + ".res.bn3", r, training);
  return add(sc, r);
}

}  // namespace iris

#endif  // IRIS_BLOCKS_HPP_
