#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "iris/blocks.hpp"

using namespace iris;
using iris::testing::GradCheck;
using iris::testing::randomize;

using Td = Tensor<double>;

TEST_CASE("layer_output_shape covers the catalogue") {
  const std::vector<int> img{1, 256, 256, 3};
  CHECK(layer_output_shape(LayerSpec::conv(128, 1, 1), img) ==
        std::vector<int>{1, 256, 256, 128});
  CHECK(layer_output_shape(LayerSpec::conv(256, 3, 2), {1, 256, 256, 128}) ==
        std::vector<int>{1, 128, 128, 256});
  CHECK(layer_output_shape(LayerSpec::conv(512, 3, 2), {1, 128, 128, 256}) ==
        std::vector<int>{1, 64, 64, 512});
  CHECK(layer_output_shape(LayerSpec::pool(2, 2), {1, 8, 8, 4}) ==
        std::vector<int>{1, 4, 4, 4});
  CHECK(layer_output_shape({LayerKind::flatten}, {2, 4, 4, 8}) ==
        std::vector<int>{2, 128});
  CHECK(layer_output_shape(LayerSpec::dense(10), {2, 128}) ==
        std::vector<int>{2, 10});
  CHECK(layer_output_shape({LayerKind::relu}, {2, 3, 3, 3}) ==
        std::vector<int>{2, 3, 3, 3});
  CHECK_THROWS_AS(layer_output_shape(LayerSpec::conv(1, 9, 1, 0), {1, 4, 4, 1}),
                  std::invalid_argument);
}

TEST_CASE("layer_forward matches the declared shape function") {
  Rng rng(1);
  ParamStore<double> ps;

  // First two encoder rows, at a batch of one.
  const LayerSpec row1 = LayerSpec::conv(128, 1, 1);
  layer_init(row1, {1, 256, 256, 3}, ps, "row1", rng);
  Td img({1, 256, 256, 3});
  randomize(img, rng, 0.1);
  const Td out1 = layer_forward(row1, img, ps, "row1");
  CHECK(out1.shape() == std::vector<int>{1, 256, 256, 128});

  const LayerSpec row2 = LayerSpec::conv(256, 3, 2);
  layer_init(row2, out1.shape(), ps, "row2", rng);
  const Td out2 = layer_forward(row2, out1, ps, "row2");
  CHECK(out2.shape() == std::vector<int>{1, 128, 128, 256});

  // Predicted == actual across a mixed stack on a small input.
  std::vector<LayerSpec> stack = {
      LayerSpec::conv(6, 3, 2),  {LayerKind::batch_norm}, {LayerKind::relu},
      LayerSpec::pool(2, 2),     {LayerKind::flatten},    LayerSpec::dense(5),
      {LayerKind::softmax}};
  std::vector<int> shape{2, 16, 16, 3};
  Td x({2, 16, 16, 3});
  randomize(x, rng);
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const std::string prefix = "l" + std::to_string(i);
    layer_init(stack[i], shape, ps, prefix, rng);
    shape = layer_output_shape(stack[i], shape);
    x = layer_forward(stack[i], x, ps, prefix, /*training=*/true, 7);
    CHECK(x.shape() == shape);
  }
}

TEST_CASE("relu layer zeroes negative input") {
  ParamStore<double> ps;
  Td x = Td::full({1, 2, 2, 2}, -3.0);
  const Td y = layer_forward({LayerKind::relu}, x, ps, "r");
  for (long i = 0; i < y.size(); ++i) CHECK(y.values()[i] == 0.0);
}

TEST_CASE("attention preserves shape and reduces to identity at zero weights") {
  AttentionConfig cfg{6, 2, 0};
  CHECK(cfg.resolved_dim() == 3);

  Rng rng(2);
  ParamStore<double> ps;
  attention_init(cfg, ps, "attn", rng);
  Td x({2, 4, 4, 6});
  randomize(x, rng);
  const Td y = attention_forward(cfg, x, ps, "attn");
  CHECK(y.shape() == x.shape());

  // Zero projections and fusion: pure residual.
  ParamStore<double> zps;
  attention_init(cfg, zps, "attn", rng);
  for (auto& e : zps.entries()) e.tensor.values().setZero();
  const Td z = attention_forward(cfg, x, zps, "attn");
  for (long i = 0; i < z.size(); ++i) CHECK(z.values()[i] == x.values()[i]);

  CHECK_THROWS_AS(attention_forward(cfg, Td({1, 4, 4, 5}), ps, "attn"),
                  std::invalid_argument);
}

TEST_CASE("attention is equivariant under spatial permutations") {
  AttentionConfig cfg{4, 2, 2};
  Rng rng(3);
  ParamStore<double> ps;
  attention_init(cfg, ps, "attn", rng);

  const int h = 4, w = 4, c = 4, l = h * w;
  Td x({1, h, w, c});
  randomize(x, rng);

  std::vector<int> perm(l);
  for (int i = 0; i < l; ++i) perm[i] = i;
  Rng prng(17);
  prng.shuffle(perm);

  Td xp({1, h, w, c});
  for (int p = 0; p < l; ++p)
    for (int ci = 0; ci < c; ++ci)
      xp.values()[p * c + ci] = x.values()[perm[p] * c + ci];

  const Td y = attention_forward(cfg, x, ps, "attn");
  const Td yp = attention_forward(cfg, xp, ps, "attn");
  for (int p = 0; p < l; ++p)
    for (int ci = 0; ci < c; ++ci)
      CHECK(yp.values()[p * c + ci] ==
            doctest::Approx(y.values()[perm[p] * c + ci]).epsilon(1e-6));
}

TEST_CASE("attention gradients check out") {
  AttentionConfig cfg{4, 2, 2};
  Rng rng(4);
  ParamStore<double> ps;
  attention_init(cfg, ps, "attn", rng);
  Td x({1, 3, 3, 4}, true);
  randomize(x, rng);

  std::vector<Td> checked{x};
  for (auto& e : ps.entries()) checked.push_back(e.tensor);

  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(
          [&] { return mean_all(square(attention_forward(cfg, x, ps, "attn"))); },
          checked, rng),
      gc.last_error);
}

TEST_CASE("style block: identity modulation reduces to conv + skip add") {
  StyleBlockConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 4;
  cfg.style_dim = 5;
  cfg.upsample = false;
  cfg.noise_channels = 2;
  cfg.demodulate = false;

  Rng rng(5);
  ParamStore<double> ps;
  style_block_init(cfg, ps, "blk", rng);
  // Affine fixed at scale 1: zero weights, unit bias (the init default).
  ps.get("blk.affine.w").values().setZero();

  Td feat({2, 4, 4, 3});
  Td style({5});
  Td skip({2, 4, 4, 2});
  randomize(feat, rng);
  randomize(style, rng);
  randomize(skip, rng);

  const Td got = style_block_forward(cfg, feat, style, skip, ps, "blk");

  const Td plain = conv2d(feat, ps.get("blk.conv.w"), ps.get("blk.conv.b"), 1, 1);
  const Td injected = conv2d(skip, ps.get("blk.noise.w"), Td(), 1, 0);
  const Td want = leaky_relu(add(plain, injected), 0.2);
  REQUIRE(got.shape() == want.shape());
  for (long i = 0; i < got.size(); ++i)
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-12));
}

TEST_CASE("style block: zero noise projection decouples the skip input") {
  StyleBlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 3;
  cfg.style_dim = 4;
  cfg.upsample = true;
  cfg.noise_channels = 5;

  Rng rng(6);
  ParamStore<double> ps;
  style_block_init(cfg, ps, "blk", rng);
  ps.get("blk.noise.w").values().setZero();

  Td feat({1, 2, 2, 2}), style({4});
  randomize(feat, rng);
  randomize(style, rng);
  Td skip_a({1, 4, 4, 5}), skip_b({1, 4, 4, 5});
  randomize(skip_a, rng);
  randomize(skip_b, rng);

  const Td ya = style_block_forward(cfg, feat, style, skip_a, ps, "blk");
  const Td yb = style_block_forward(cfg, feat, style, skip_b, ps, "blk");
  CHECK(ya.shape() == std::vector<int>{1, 4, 4, 3});  // upsampled
  for (long i = 0; i < ya.size(); ++i)
    CHECK(ya.values()[i] == yb.values()[i]);

  // Spatial mismatch between skip and output is a shape error.
  CHECK_THROWS_AS(
      style_block_forward(cfg, feat, style, Td({1, 2, 2, 5}), ps, "blk"),
      std::invalid_argument);
}

TEST_CASE("demodulation cancels uniform scaling of the style") {
  StyleBlockConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 4;
  cfg.style_dim = 3;
  cfg.upsample = false;
  cfg.noise_channels = 2;
  cfg.demodulate = true;

  Rng rng(7);
  ParamStore<double> ps;
  style_block_init(cfg, ps, "blk", rng);

  Td feat({1, 4, 4, 3}), style({3}), skip({1, 4, 4, 2});
  randomize(feat, rng);
  randomize(style, rng);
  randomize(skip, rng);

  const Td base = style_block_forward(cfg, feat, style, skip, ps, "blk");
  for (double c : {0.2, 5.0}) {
    ParamStore<double> scaled;
    style_block_init(cfg, scaled, "blk", rng);
    scaled.get("blk.affine.w").values() = ps.get("blk.affine.w").values() * c;
    scaled.get("blk.affine.b").values() = ps.get("blk.affine.b").values() * c;
    scaled.get("blk.conv.w").values() = ps.get("blk.conv.w").values();
    scaled.get("blk.conv.b").values() = ps.get("blk.conv.b").values();
    scaled.get("blk.noise.w").values() = ps.get("blk.noise.w").values();
    const Td y = style_block_forward(cfg, feat, style, skip, scaled, "blk");
    for (long i = 0; i < y.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(base.values()[i]).epsilon(1e-6));
  }
}

TEST_CASE("style block gradients check out") {
  StyleBlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 3;
  cfg.style_dim = 4;
  cfg.upsample = false;
  cfg.noise_channels = 2;

  Rng rng(8);
  ParamStore<double> ps;
  style_block_init(cfg, ps, "blk", rng);
  Td feat({2, 4, 4, 2}, true), style({2, 4}, true), skip({2, 4, 4, 2}, true);
  randomize(feat, rng);
  randomize(style, rng);
  randomize(skip, rng);

  std::vector<Td> checked{feat, style, skip};
  for (auto& e : ps.entries()) checked.push_back(e.tensor);

  GradCheck gc;
  CHECK_MESSAGE(gc.run(
                    [&] {
                      return mean_all(square(
                          style_block_forward(cfg, feat, style, skip, ps, "blk")));
                    },
                    checked, rng),
                gc.last_error);
}

TEST_CASE("bottleneck: shape arithmetic and the shortcut-only reduction") {
  BottleneckConfig cfg{64, 128, 2};
  Rng rng(9);
  ParamStore<double> ps;
  bottleneck_init(cfg, ps, "bn", rng);
  Td x({1, 32, 32, 64});
  randomize(x, rng, 0.3);
  const Td y = bottleneck_forward(cfg, x, ps, "bn");
  CHECK(y.shape() == std::vector<int>{1, 16, 16, 128});

  // Odd spatial size uses ceil semantics.
  BottleneckConfig odd{4, 8, 2};
  ParamStore<double> ops;
  bottleneck_init(odd, ops, "bn", rng);
  Td xo({1, 5, 5, 4});
  randomize(xo, rng);
  CHECK(bottleneck_forward(odd, xo, ops, "bn").shape() ==
        std::vector<int>{1, 3, 3, 8});

  // Zeroed residual weights and shifts leave exactly the shortcut branch.
  BottleneckConfig small{3, 5, 2};
  ParamStore<double> zps;
  bottleneck_init(small, zps, "bn", rng);
  zps.get("bn.res.conv1.w").values().setZero();
  zps.get("bn.res.conv2.w").values().setZero();
  zps.get("bn.res.bn2.beta").values().setZero();
  zps.get("bn.res.bn3.beta").values().setZero();
  Td xs({2, 6, 6, 3});
  randomize(xs, rng);
  const Td full = bottleneck_forward(small, xs, zps, "bn", /*training=*/true);

  Td sc = max_pool(xs, 1, 2);
  sc = conv2d(sc, zps.get("bn.sc.conv.w"), Td(), 1, 0);
  sc = batch_norm(sc, zps.get("bn.sc.bn.gamma"), zps.get("bn.sc.bn.beta"),
                  zps.get("bn.sc.bn.rm"), zps.get("bn.sc.bn.rv"), true);
  for (long i = 0; i < full.size(); ++i)
    CHECK(full.values()[i] == doctest::Approx(sc.values()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(bottleneck_forward(cfg, Td({1, 8, 8, 3}), ps, "bn"),
                  std::invalid_argument);
}

TEST_CASE("bottleneck gradients check out in both modes") {
  BottleneckConfig cfg{2, 4, 2};
  Rng rng(10);
  ParamStore<double> ps;
  bottleneck_init(cfg, ps, "bn", rng);
  Td x({2, 4, 4, 2}, true);
  randomize(x, rng);

  std::vector<Td> checked{x};
  for (auto& e : ps.entries())
    if (e.tensor.requires_grad()) checked.push_back(e.tensor);

  GradCheck gc;
  for (bool training : {true, false}) {
    CHECK_MESSAGE(
        gc.run(
            [&] {
              return sum_all(bottleneck_forward(cfg, x, ps, "bn", training));
            },
            checked, rng),
        gc.last_error);
  }
}

TEST_CASE("param store enforces unique names and prefix groups") {
  ParamStore<float> ps;
  ps.create("a.w", {2, 2});
  ps.create("a.b", {2});
  ps.create("b.w", {3});
  CHECK_THROWS_AS(ps.create("a.w", {1}), std::invalid_argument);
  CHECK_THROWS_AS(ps.get("missing"), std::invalid_argument);
  CHECK(ps.group("a.").size() == 2);
  CHECK(ps.group("b.").size() == 1);
  ps.set_requires_grad("a.", false);
  CHECK_FALSE(ps.get("a.w").requires_grad());
  CHECK(ps.get("b.w").requires_grad());
}
