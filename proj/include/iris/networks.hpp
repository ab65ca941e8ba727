#ifndef IRIS_NETWORKS_HPP_
#define IRIS_NETWORKS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "iris/blocks.hpp"

namespace iris {

namespace detail {
inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }
inline int log2i(int v) {
  int r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder: 1x1 conv at full resolution, then stride-2 3x3 convs down to 4x4,
// attention inserted mid-stack, dense head to the latent code.
// ---------------------------------------------------------------------------

struct EncoderConfig {
  int input_size = 256;  // H = W, power of two >= 8
  std::vector<int> channels;  // empty resolves to the default schedule
  int latent_dim = 512;
  int attention_index = -1;  // layer index after which attention runs; -1 mid
  int attention_heads = 4;
  int attention_dim_per_head = 0;

  int depth() const { return detail::log2i(input_size / 4) + 1; }

  std::vector<int> resolved_channels() const {
    if (!channels.empty()) return channels;
    std::vector<int> ch(depth());
    for (int i = 0; i < depth(); ++i)
      ch[i] = i == 0 ? 128 : (i == 1 ? 256 : 512);
    return ch;
  }

  int resolved_attention_index() const {
    return attention_index >= 0 ? attention_index : depth() / 2;
  }

  void validate() const {
    if (!detail::is_pow2(input_size) || input_size < 8)
      throw std::invalid_argument("encoder input_size must be a power of two >= 8");
    if (static_cast<int>(resolved_channels().size()) != depth())
      throw std::invalid_argument(
          "encoder channel schedule must have log2(size/4)+1 entries");
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
    if (resolved_attention_index() >= depth())
      throw std::invalid_argument("attention index beyond encoder depth");
  }

  // Spatial side of layer i's output: full res for layer 0, then halved.
  int layer_size(int i) const { return i == 0 ? input_size : input_size >> i; }
};

template <class S>
void encoder_init(const EncoderConfig& cfg, ParamStore<S>& ps,
                  const std::string& prefix, Rng& rng) {
  cfg.validate();
  const auto ch = cfg.resolved_channels();
  int in_ch = 3;
  for (int i = 0; i < cfg.depth(); ++i) {
    init_conv(ps, prefix + ".conv" + std::to_string(i), i == 0 ? 1 : 3, in_ch,
              ch[i], rng);
    in_ch = ch[i];
  }
  AttentionConfig att{ch[cfg.resolved_attention_index()], cfg.attention_heads,
                      cfg.attention_dim_per_head};
  attention_init(att, ps, prefix + ".attn", rng);
  init_dense(ps, prefix + ".fc", 4 * 4 * ch.back(), cfg.latent_dim, rng);
}

template <class S>
struct EncoderOut {
  Tensor<S> z;                  // [B, latent_dim]
  std::vector<Tensor<S>> skips; // deepest (4x4) first
};

template <class S>
EncoderOut<S> encoder_forward(const EncoderConfig& cfg, const Tensor<S>& image,
                              ParamStore<S>& ps, const std::string& prefix) {
  cfg.validate();
  if (image.rank() != 4 || image.dim(1) != cfg.input_size ||
      image.dim(2) != cfg.input_size || image.dim(3) != 3)
    throw std::invalid_argument("encoder: input must be [B," +
                                std::to_string(cfg.input_size) + "," +
                                std::to_string(cfg.input_size) + ",3], got " +
                                shape_str(image.shape()));
  const auto ch = cfg.resolved_channels();
  const int attn_at = cfg.resolved_attention_index();

  Tensor<S> x = image;
  std::vector<Tensor<S>> feats;
  feats.reserve(cfg.depth());
  for (int i = 0; i < cfg.depth(); ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    x = conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), i == 0 ? 1 : 2,
               -1, name);
    x = relu(x);
    if (i == attn_at) {
      AttentionConfig att{ch[i], cfg.attention_heads,
                          cfg.attention_dim_per_head};
      x = attention_forward(att, x, ps, prefix + ".attn");
    }
    feats.push_back(x);
  }

  EncoderOut<S> out;
  const int b = image.dim(0);
  Tensor<S> flat = reshape(x, {b, 4 * 4 * ch.back()});
  out.z = fully_connected(flat, ps.get(prefix + ".fc.w"),
                          ps.get(prefix + ".fc.b"));
  out.skips.assign(feats.rbegin(), feats.rend());
  return out;
}

// ---------------------------------------------------------------------------
// Restorer: encoder + mapping network + style-modulated decoder. The decoder
// starts from a learned 4x4 constant and consumes one encoder skip per block.
// ---------------------------------------------------------------------------

struct RestorerConfig {
  EncoderConfig encoder;
  int mapping_depth = 4;
  std::vector<int> decoder_channels;  // empty mirrors the encoder schedule
  bool demodulate = true;

  int style_dim() const { return encoder.latent_dim; }
  int num_blocks() const { return encoder.depth(); }

  std::vector<int> resolved_decoder_channels() const {
    if (!decoder_channels.empty()) return decoder_channels;
    auto ch = encoder.resolved_channels();
    return std::vector<int>(ch.rbegin(), ch.rend());
  }

  StyleBlockConfig block_config(int i) const {
    const auto dch = resolved_decoder_channels();
    const auto ech = encoder.resolved_channels();
    StyleBlockConfig b;
    b.in_channels = i == 0 ? dch[0] : dch[i - 1];
    b.out_channels = dch[i];
    b.style_dim = style_dim();
    b.upsample = i > 0;
    b.noise_channels = ech[encoder.depth() - 1 - i];
    b.demodulate = demodulate;
    return b;
  }

  // Spatial side of block i's output. Must equal the matching skip's side.
  int block_size(int i) const { return 4 << i; }

  void validate() const {
    encoder.validate();
    if (mapping_depth < 0)
      throw std::invalid_argument("mapping_depth must be >= 0");
    if (static_cast<int>(resolved_decoder_channels().size()) != num_blocks())
      throw std::invalid_argument(
          "decoder channel schedule must have one entry per block");
    for (int i = 0; i < num_blocks(); ++i) {
      const int skip_size = encoder.layer_size(encoder.depth() - 1 - i);
      if (skip_size != block_size(i))
        throw std::invalid_argument("skip/block resolution mismatch at block " +
                                    std::to_string(i));
    }
  }
};

template <class S>
void mapping_init(const RestorerConfig& cfg, ParamStore<S>& ps,
                  const std::string& prefix, Rng& rng) {
  for (int i = 0; i < cfg.mapping_depth; ++i)
    init_dense(ps, prefix + ".fc" + std::to_string(i), cfg.style_dim(),
               cfg.style_dim(), rng);
}

template <class S>
Tensor<S> mapping_forward(const RestorerConfig& cfg, const Tensor<S>& z,
                          ParamStore<S>& ps, const std::string& prefix) {
  Tensor<S> w = z;
  for (int i = 0; i < cfg.mapping_depth; ++i) {
    const std::string name = prefix + ".fc" + std::to_string(i);
    w = leaky_relu(
        fully_connected(w, ps.get(name + ".w"), ps.get(name + ".b")), S(0.2));
  }
  return w;
}

template <class S>
void decoder_init(const RestorerConfig& cfg, ParamStore<S>& ps,
                  const std::string& prefix, Rng& rng) {
  cfg.validate();
  const auto dch = cfg.resolved_decoder_channels();
  Tensor<S>& c = ps.create(prefix + ".const", {4, 4, dch[0]});
  Rng cr = rng.fork(prefix + ".const");
  for (long i = 0; i < c.size(); ++i)
    c.values()[i] = static_cast<S>(cr.normal());
  for (int i = 0; i < cfg.num_blocks(); ++i)
    style_block_init(cfg.block_config(i), ps,
                     prefix + ".b" + std::to_string(i), rng);
  init_conv(ps, prefix + ".torgb", 1, dch.back(), 3, rng);
}

// skips: deepest first, one per block; the same intermediate code w is
// distributed to every block. Output is sigmoid-squashed to [0, 1].
template <class S>
Tensor<S> decoder_forward(const RestorerConfig& cfg, const Tensor<S>& w,
                          const std::vector<Tensor<S>>& skips,
                          ParamStore<S>& ps, const std::string& prefix) {
  if (static_cast<int>(skips.size()) != cfg.num_blocks())
    throw std::invalid_argument("decoder: expected one skip per block");
  const int b = w.dim(0);

  Tensor<S> cst = reshape(ps.get(prefix + ".const"),
                          {1, 4, 4, cfg.resolved_decoder_channels()[0]});
  Tensor<S> x = cst;
  if (b > 1) {
    std::vector<Tensor<S>> rep(static_cast<std::size_t>(b), cst);
    x = concat(0, rep);
  }
  for (int i = 0; i < cfg.num_blocks(); ++i)
    x = style_block_forward(cfg.block_config(i), x, w, skips[i], ps,
                            prefix + ".b" + std::to_string(i));
  Tensor<S> rgb = conv2d(x, ps.get(prefix + ".torgb.w"),
                         ps.get(prefix + ".torgb.b"), 1, 0, prefix + ".torgb");
  return sigmoid(rgb);
}

template <class S>
void restorer_init(const RestorerConfig& cfg, ParamStore<S>& ps, Rng& rng) {
  encoder_init(cfg.encoder, ps, "enc", rng);
  mapping_init(cfg, ps, "map", rng);
  decoder_init(cfg, ps, "dec", rng);
}

// Full pass: encode, map z to w, decode with skip-as-noise wiring.
template <class S>
Tensor<S> restore(const RestorerConfig& cfg, const Tensor<S>& lq_image,
                  ParamStore<S>& ps) {
  EncoderOut<S> enc = encoder_forward(cfg.encoder, lq_image, ps, "enc");
  Tensor<S> w = mapping_forward(cfg, enc.z, ps, "map");
  return decoder_forward(cfg, w, enc.skips, ps, "dec");
}

// ---------------------------------------------------------------------------
// Discriminator: residual stride-2 stack down to 4x4, dense head to one
// raw logit per batch item.
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
  int input_size = 64;
  std::vector<int> channels;  // stages + 1 entries; empty resolves

  int stages() const { return detail::log2i(input_size / 4); }

  std::vector<int> resolved_channels() const {
    if (!channels.empty()) return channels;
    std::vector<int> ch(stages() + 1);
    int c = 32;
    for (int i = 0; i <= stages(); ++i) {
      ch[i] = c;
      c = std::min(2 * c, 512);
    }
    return ch;
  }

  void validate() const {
    if (!detail::is_pow2(input_size) || input_size < 8)
      throw std::invalid_argument("discriminator input must be a power of two >= 8");
    if (static_cast<int>(resolved_channels().size()) != stages() + 1)
      throw std::invalid_argument("discriminator channel schedule length");
  }
};

template <class S>
void discriminator_init(const DiscriminatorConfig& cfg, ParamStore<S>& ps,
                        const std::string& prefix, Rng& rng) {
  cfg.validate();
  const auto ch = cfg.resolved_channels();
  init_conv(ps, prefix + ".fromrgb", 1, 3, ch[0], rng);
  for (int i = 0; i < cfg.stages(); ++i) {
    const std::string b = prefix + ".s" + std::to_string(i);
    init_conv(ps, b + ".conv1", 3, ch[i], ch[i], rng);
    init_conv(ps, b + ".conv2", 3, ch[i], ch[i + 1], rng);
    init_conv(ps, b + ".skip", 1, ch[i], ch[i + 1], rng, /*bias=*/false);
  }
  init_dense(ps, prefix + ".fc", 4 * 4 * ch.back(), 1, rng);
}

template <class S>
Tensor<S> discriminator_forward(const DiscriminatorConfig& cfg,
                                const Tensor<S>& image, ParamStore<S>& ps,
                                const std::string& prefix) {
  cfg.validate();
  if (image.rank() != 4 || image.dim(1) != cfg.input_size ||
      image.dim(2) != cfg.input_size || image.dim(3) != 3)
    throw std::invalid_argument("discriminator: bad input " +
                                shape_str(image.shape()));
  const auto ch = cfg.resolved_channels();
  Tensor<S> x = leaky_relu(conv2d(image, ps.get(prefix + ".fromrgb.w"),
                                  ps.get(prefix + ".fromrgb.b"), 1, 0,
                                  prefix + ".fromrgb"),
                           S(0.2));
  for (int i = 0; i < cfg.stages(); ++i) {
    const std::string b = prefix + ".s" + std::to_string(i);
    Tensor<S> main = leaky_relu(
        conv2d(x, ps.get(b + ".conv1.w"), ps.get(b + ".conv1.b"), 1, 1,
               b + ".conv1"),
        S(0.2));
    main = leaky_relu(conv2d(main, ps.get(b + ".conv2.w"),
                             ps.get(b + ".conv2.b"), 2, 1, b + ".conv2"),
                      S(0.2));
    Tensor<S> skip =
        conv2d(x, ps.get(b + ".skip.w"), Tensor<S>(), 2, 0, b + ".skip");
    x = add(main, skip);
  }
  const int bsz = image.dim(0);
  Tensor<S> flat = reshape(x, {bsz, 4 * 4 * ch.back()});
  Tensor<S> score =
      fully_connected(flat, ps.get(prefix + ".fc.w"), ps.get(prefix + ".fc.b"));
  return reshape(score, {bsz});
}

// ---------------------------------------------------------------------------
// Bottleneck classifier: conv/bn/relu stem, four bottleneck stages (first
// block of each stage stride 2), bn/dropout/flatten/dense/bn head.
// ---------------------------------------------------------------------------

struct ClassifierConfig {
  int num_classes = 0;
  int embedding_dim = 512;
  std::vector<int> stage_blocks{3, 4, 14, 3};
  std::vector<int> stage_channels{64, 128, 256, 512};
  double dropout_rate = 0.4;
  int input_size = 32;  // H = W

  int bottleneck_count() const {
    int n = 0;
    for (int b : stage_blocks) n += b;
    return n;
  }

  // Spatial side after the stem and all four stride-2 stages.
  int final_size() const {
    int s = input_size;
    for (std::size_t i = 0; i < stage_blocks.size(); ++i) s = (s + 1) / 2;
    return s;
  }

  void validate() const {
    if (num_classes < 1)
      throw std::invalid_argument("classifier needs num_classes >= 1");
    if (stage_blocks.size() != stage_channels.size() || stage_blocks.empty())
      throw std::invalid_argument("classifier stage configuration mismatch");
    for (int b : stage_blocks)
      if (b < 1) throw std::invalid_argument("stage_blocks entries must be >= 1");
    if (final_size() < 1)
      throw std::invalid_argument("classifier input too small for the stages");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("dropout_rate must be in [0,1)");
  }
};

template <class S>
void classifier_init(const ClassifierConfig& cfg, ParamStore<S>& ps,
                     const std::string& prefix, Rng& rng) {
  cfg.validate();
  init_conv(ps, prefix + ".stem.conv", 3, 3, cfg.stage_channels[0], rng,
            /*bias=*/false);
  init_bn<S>(ps, prefix + ".stem.bn", cfg.stage_channels[0]);
  int in_ch = cfg.stage_channels[0];
  for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
    for (int j = 0; j < cfg.stage_blocks[s]; ++j) {
      BottleneckConfig bc{in_ch, cfg.stage_channels[s], j == 0 ? 2 : 1};
      bottleneck_init(bc, ps,
                      prefix + ".s" + std::to_string(s) + ".b" +
                          std::to_string(j),
                      rng);
      in_ch = cfg.stage_channels[s];
    }
  }
  init_bn<S>(ps, prefix + ".head.bn", in_ch);
  const int flat = cfg.final_size() * cfg.final_size() * in_ch;
  init_dense(ps, prefix + ".head.fc", flat, cfg.embedding_dim, rng);
  init_bn<S>(ps, prefix + ".head.bn1d", cfg.embedding_dim);
  init_dense(ps, prefix + ".logits", cfg.embedding_dim, cfg.num_classes, rng);
}

template <class S>
struct ClassifierOut {
  Tensor<S> logits;     // [B, num_classes]
  Tensor<S> embedding;  // [B, embedding_dim], the identity feature F
};

template <class S>
ClassifierOut<S> classifier_forward(const ClassifierConfig& cfg,
                                    const Tensor<S>& image, ParamStore<S>& ps,
                                    const std::string& prefix, bool training,
                                    std::uint64_t dropout_seed = 0) {
  cfg.validate();
  if (image.rank() != 4 || image.dim(1) != cfg.input_size ||
      image.dim(2) != cfg.input_size || image.dim(3) != 3)
    throw std::invalid_argument("classifier: bad input " +
                                shape_str(image.shape()));
  Tensor<S> x = conv2d(image, ps.get(prefix + ".stem.conv.w"), Tensor<S>(), 1,
                       1, prefix + ".stem.conv");
  x = relu(bn_forward(ps, prefix + ".stem.bn", x, training));

  int in_ch = cfg.stage_channels[0];
  for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
    for (int j = 0; j < cfg.stage_blocks[s]; ++j) {
      BottleneckConfig bc{in_ch, cfg.stage_channels[s], j == 0 ? 2 : 1};
      x = bottleneck_forward(bc, x, ps,
                             prefix + ".s" + std::to_string(s) + ".b" +
                                 std::to_string(j),
                             training);
      in_ch = cfg.stage_channels[s];
    }
  }

  x = bn_forward(ps, prefix + ".head.bn", x, training);
  x = dropout(x, cfg.dropout_rate, dropout_seed, training);
  const int b = image.dim(0);
  Tensor<S> flat =
      reshape(x, {b, cfg.final_size() * cfg.final_size() * in_ch});
  Tensor<S> emb = fully_connected(flat, ps.get(prefix + ".head.fc.w"),
                                  ps.get(prefix + ".head.fc.b"));
  emb = bn_forward(ps, prefix + ".head.bn1d", emb, training);

  ClassifierOut<S> out;
  out.embedding = emb;
  out.logits = fully_connected(emb, ps.get(prefix + ".logits.w"),
                               ps.get(prefix + ".logits.b"));
  return out;
}

}  // namespace iris

#endif  // IRIS_NETWORKS_HPP_
