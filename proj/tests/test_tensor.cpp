#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "iris/ops.hpp"

using namespace iris;
using iris::testing::GradCheck;
using iris::testing::randomize;

using Td = Tensor<double>;

namespace {

// Sums every element after passing through f, so scalar grad checks cover
// tensor-valued ops.
template <class F>
std::function<Td()> summed(F f) {
  return [f]() { return sum_all(f()); };
}

}  // namespace

TEST_CASE("tensor basics") {
  Td t({2, 3});
  CHECK(t.size() == 6);
  t.at({1, 2}) = 5.0;
  CHECK(t.values()[5] == 5.0);
  CHECK_THROWS_AS(Td({0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Td::from_data({2}, {1.0, 2.0, 3.0}), std::invalid_argument);

  const Td s = Td::scalar(2.5);
  CHECK(s.value() == 2.5);
}

TEST_CASE("binary op values and broadcasting") {
  const Td a = Td::from_data({2, 2}, {1, 2, 3, 4});
  const Td b = Td::from_data({2, 2}, {10, 20, 30, 40});
  CHECK(add(a, b).values()[3] == 44);
  CHECK(sub(b, a).values()[0] == 9);
  CHECK(mul(a, b).values()[1] == 40);
  CHECK(div(b, a).values()[2] == 10);

  const Td c = Td::scalar(2.0);
  CHECK(add(a, c).values()[0] == 3);
  CHECK(mul(c, a).values()[3] == 8);
  CHECK_THROWS_AS(add(a, Td({3, 1})), std::invalid_argument);
}

TEST_CASE("gradients: elementwise and reductions") {
  Rng rng(1);
  Td a({3, 4}, true), b({3, 4}, true);
  randomize(a, rng);
  randomize(b, rng);

  GradCheck gc;
  CHECK_MESSAGE(gc.run(summed([&] { return add(a, b); }), {a, b}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return mul(a, b); }), {a, b}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return div(a, add_scalar(square(b), 1.0)); }),
                       {a, b}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return leaky_relu(a, 0.2); }), {a}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return sigmoid(a); }), {a}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return softplus(a); }), {a}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return exp_(mul_scalar(a, 0.3)); }), {a}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] { return sqrt_(add_scalar(square(a), 0.5)); }),
                       {a}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run([&] { return mean_all(mul(a, b)); }, {a, b}, rng),
                gc.last_error);
}

TEST_CASE("gradients: shape ops") {
  Rng rng(2);
  Td a({2, 3, 2}, true), b({2, 3, 2}, true);
  randomize(a, rng);
  randomize(b, rng);

  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return reshape(mul(a, a), {4, 3}); }), {a}, rng),
      gc.last_error);
  CHECK_MESSAGE(
      gc.run(summed([&] { return slice(a, 1, 1, 2); }), {a}, rng),
      gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] {
                  std::vector<Td> parts{slice(a, 1, 0, 1), slice(b, 1, 0, 2)};
                  return concat(1, parts);
                }),
                       {a, b}, rng),
                gc.last_error);
  Td m({3, 5}, true);
  randomize(m, rng);
  CHECK_MESSAGE(
      gc.run(summed([&] { return transpose2(square(m)); }), {m}, rng),
      gc.last_error);
}

TEST_CASE("gradients: axis helpers") {
  Rng rng(3);
  Td x({2, 3, 4}, true);
  Td v({3}, true);
  Td w({4}, true);
  randomize(x, rng);
  randomize(v, rng);
  randomize(w, rng);

  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return scale_axis(x, v, 1); }), {x, v}, rng),
      gc.last_error);
  CHECK_MESSAGE(
      gc.run(summed([&] { return add_axis(x, w, 2); }), {x, w}, rng),
      gc.last_error);
  CHECK_MESSAGE(
      gc.run(summed([&] { return sum_to_axis(square(x), 1); }), {x}, rng),
      gc.last_error);

  // sum_to_axis values: reduce a known tensor.
  const Td t = Td::from_data({2, 2}, {1, 2, 3, 4});
  const Td s0 = sum_to_axis(t, 0);
  CHECK(s0.values()[0] == 3);
  CHECK(s0.values()[1] == 7);
  const Td s1 = sum_to_axis(t, 1);
  CHECK(s1.values()[0] == 4);
  CHECK(s1.values()[1] == 6);
}

TEST_CASE("matmul values and gradients") {
  const Td a = Td::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Td b = Td::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  const Td c = matmul(a, b);
  CHECK(c.values()[0] == 58);
  CHECK(c.values()[1] == 64);
  CHECK(c.values()[2] == 139);
  CHECK(c.values()[3] == 154);

  Rng rng(4);
  Td x({3, 4}, true), y({4, 2}, true);
  randomize(x, rng);
  randomize(y, rng);
  GradCheck gc;
  CHECK_MESSAGE(gc.run(summed([&] { return matmul(x, y); }), {x, y}, rng),
                gc.last_error);

  Td bias({2}, true);
  randomize(bias, rng);
  CHECK_MESSAGE(gc.run(summed([&] { return fully_connected(x, y, bias); }),
                       {x, y, bias}, rng),
                gc.last_error);
}

TEST_CASE("conv2d shape arithmetic and reference values") {
  // 1x1 kernel, identity weight on one channel: output equals input.
  Td x = Td::from_data({1, 2, 2, 1}, {1, 2, 3, 4});
  Td w = Td::from_data({1, 1, 1, 1}, {1});
  const Td y = conv2d(x, w, Tensor<double>(), 1, 0);
  for (int i = 0; i < 4; ++i) CHECK(y.values()[i] == x.values()[i]);

  // 3x3 averaging kernel on a constant image with zero padding: the center
  // keeps the value, corners see 4/9 of it.
  Td ones = Td::full({1, 3, 3, 1}, 1.0);
  Td avg = Td::full({3, 3, 1, 1}, 1.0 / 9.0);
  const Td z = conv2d(ones, avg, Tensor<double>(), 1, 1);
  CHECK(z.at({0, 1, 1, 0}) == doctest::Approx(1.0));
  CHECK(z.at({0, 0, 0, 0}) == doctest::Approx(4.0 / 9.0));

  // Stride-2 shape: 8x8 -> 4x4 with same padding.
  Td big({2, 8, 8, 3});
  Td k3({3, 3, 3, 5});
  const Td s2 = conv2d(big, k3, Tensor<double>(), 2, -1);
  CHECK(s2.shape() == std::vector<int>{2, 4, 4, 5});

  CHECK_THROWS_AS(conv2d(big, Td({3, 3, 4, 5}), Tensor<double>(), 1, 1),
                  std::invalid_argument);
}

TEST_CASE("conv2d gradients") {
  Rng rng(5);
  Td x({2, 5, 5, 2}, true);
  Td w({3, 3, 2, 3}, true);
  Td b({3}, true);
  randomize(x, rng);
  randomize(w, rng, 0.5);
  randomize(b, rng);

  GradCheck gc;
  for (int stride : {1, 2}) {
    CHECK_MESSAGE(
        gc.run(summed([&] { return square(conv2d(x, w, b, stride, 1)); }),
               {x, w, b}, rng),
        gc.last_error);
  }
}

TEST_CASE("max_pool values and gradients") {
  Td x = Td::from_data({1, 2, 2, 1}, {1, 5, 3, 2});
  const Td y = max_pool(x, 2, 2);
  CHECK(y.size() == 1);
  CHECK(y.values()[0] == 5);

  // kernel 1, stride 2 subsamples with ceil semantics: 5 -> 3.
  Td t({1, 5, 5, 2});
  CHECK(max_pool(t, 1, 2).shape() == std::vector<int>{1, 3, 3, 2});

  Rng rng(6);
  Td g({2, 4, 4, 3}, true);
  randomize(g, rng);
  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(max_pool(g, 2, 2)); }), {g}, rng),
      gc.last_error);
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(max_pool(g, 1, 2)); }), {g}, rng),
      gc.last_error);
}

TEST_CASE("upsample2x values and gradients") {
  Td x = Td::from_data({1, 1, 2, 1}, {3, 4});
  const Td y = upsample2x_nearest(x);
  CHECK(y.shape() == std::vector<int>{1, 2, 4, 1});
  CHECK(y.at({0, 1, 0, 0}) == 3);
  CHECK(y.at({0, 0, 3, 0}) == 4);

  Rng rng(7);
  Td g({2, 3, 3, 2}, true);
  randomize(g, rng);
  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(upsample2x_nearest(g)); }), {g}, rng),
      gc.last_error);
}

TEST_CASE("softmax rows sum to one, stay in range, and backprop") {
  Rng rng(8);
  Td x({5, 7}, true);
  randomize(x, rng, 3.0);
  const Td y = softmax_lastdim(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int c = 0; c < 7; ++c) {
      const double v = y.at({r, c});
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  GradCheck gc;
  Td q({3, 4}, true);
  randomize(q, rng);
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(softmax_lastdim(q)); }), {q}, rng),
      gc.last_error);
}

TEST_CASE("batch_norm: training stats, inference determinism, gradients") {
  Rng rng(9);
  Td x({4, 3}, true);
  randomize(x, rng, 2.0);
  Td gamma = Td::full({3}, 1.0);
  gamma.set_requires_grad(true);
  Td beta({3}, true);
  Td rm({3});
  Td rv = Td::full({3}, 1.0);

  // Training: per-channel output mean ~0, var ~1 with unit gamma.
  const Td y = batch_norm(x, gamma, beta, rm, rv, true);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int n = 0; n < 4; ++n) mean += y.at({n, c});
    CHECK(std::abs(mean / 4.0) < 1e-6);
  }
  // Running stats moved toward the batch stats.
  CHECK(rm.values().abs().maxCoeff() > 0.0);

  GradCheck gc;
  CHECK_MESSAGE(gc.run(summed([&] {
                  return square(batch_norm(x, gamma, beta, rm, rv, true));
                }),
                       {x, gamma, beta}, rng),
                gc.last_error);
  CHECK_MESSAGE(gc.run(summed([&] {
                  return square(batch_norm(x, gamma, beta, rm, rv, false));
                }),
                       {x, gamma, beta}, rng),
                gc.last_error);

  // Inference is a fixed affine map: identical runs, even repeated.
  const Td a = batch_norm(x, gamma, beta, rm, rv, false);
  const Td b = batch_norm(x, gamma, beta, rm, rv, false);
  for (long i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("dropout: train-only masking, deterministic in seed") {
  Rng rng(10);
  Td x = Td::full({1, 100}, 1.0);
  const Td inference = dropout(x, 0.4, 123, false);
  for (long i = 0; i < x.size(); ++i)
    CHECK(inference.values()[i] == 1.0);

  const Td a = dropout(x, 0.4, 123, true);
  const Td b = dropout(x, 0.4, 123, true);
  int zeros = 0;
  for (long i = 0; i < a.size(); ++i) {
    CHECK(a.values()[i] == b.values()[i]);
    if (a.values()[i] == 0.0) ++zeros;
  }
  CHECK(zeros > 10);
  CHECK(zeros < 80);

  Td g({2, 20}, true);
  randomize(g, rng);
  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(dropout(g, 0.3, 7, true)); }), {g},
             rng),
      gc.last_error);
}

TEST_CASE("cross_entropy values and gradients") {
  // Uniform logits over K classes give loss log K.
  Td logits({2, 4}, true);
  const Td l = cross_entropy(logits, {0, 3});
  CHECK(l.value() == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  Rng rng(11);
  Td x({3, 5}, true);
  randomize(x, rng);
  GradCheck gc;
  CHECK_MESSAGE(
      gc.run([&] { return cross_entropy(x, {1, 4, 2}); }, {x}, rng),
      gc.last_error);
  CHECK_THROWS_AS(cross_entropy(x, {1, 9, 2}), std::invalid_argument);
}

TEST_CASE("l2_normalize_rows values and gradients") {
  Td x = Td::from_data({1, 2}, {3.0, 4.0});
  const Td y = l2_normalize_rows(x);
  CHECK(y.values()[0] == doctest::Approx(0.6));
  CHECK(y.values()[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(l2_normalize_rows(Td({2, 2})), std::invalid_argument);

  Rng rng(12);
  Td g({3, 4}, true);
  randomize(g, rng);
  GradCheck gc;
  CHECK_MESSAGE(
      gc.run(summed([&] { return square(l2_normalize_rows(g)); }), {g}, rng),
      gc.last_error);
}

TEST_CASE("backward accumulates across shared subexpressions") {
  // y = x*x + x*x shares the same node; gradient must double.
  Td x = Td::scalar(3.0);
  x.set_requires_grad(true);
  Td sq = mul(x, x);
  Td y = add(sq, sq);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("no-grad guard suppresses tape recording") {
  Td x({2, 2}, true);
  NoGradGuard ng;
  Td y = square(x);
  CHECK_FALSE(y.requires_grad());
}
