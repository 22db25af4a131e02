#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "warpforge/tensor.hpp"
#include "warpforge/tensor_conv.hpp"
#include "warpforge/tensor_image.hpp"

using namespace warpforge;

namespace {

Tensor<double> leaf_of(Tape<double>& tape, std::vector<int> shape, std::vector<double> data,
                       bool grad = false) {
  return tape.leaf(std::move(shape), std::move(data), grad);
}

// Weighted sum against fixed random weights turns any op output into a
// scalar loss for directional gradient checks. Seeded per call site so the
// finite-difference re-evaluations see identical weights.
Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& x, uint64_t seed) {
  warpforge::Rng rng(seed);
  auto w = tape.leaf(x.shape(), oracle::random_vector(std::size_t(x.numel()), rng), false);
  return sum(mul(x, w));
}

}  // namespace

TEST_SUITE("ndtensor") {

TEST_CASE("tape records in topological order and leaves hold values") {
  Tape<double> tape;
  auto a = leaf_of(tape, {2, 2}, {1, 2, 3, 4}, true);
  auto b = leaf_of(tape, {2, 2}, {5, 6, 7, 8});
  auto c = mul(a, b);
  auto d = sum(c);
  for (int in : tape.node(c.node()).inputs) CHECK(in < c.node());
  for (int in : tape.node(d.node()).inputs) CHECK(in < d.node());
  CHECK(d.scalar() == doctest::Approx(5 + 12 + 21 + 32));
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Tape<double> tape;
  auto x = leaf_of(tape, {3}, {1.5, -2.0, 0.25}, true);
  auto loss = sum(x);
  tape.backward(loss);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: analytic gradient of sum of squares") {
  Tape<double> tape;
  auto x = leaf_of(tape, {2}, {1, 2}, true);
  tape.backward(sum(square(x)));
  CHECK(x.grad()[0] == doctest::Approx(2));
  CHECK(x.grad()[1] == doctest::Approx(4));
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Tape<double> tape;
  auto x = leaf_of(tape, {2}, {1, 2}, true);
  CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("backward: reused tensors accumulate gradient once per use") {
  Tape<double> tape;
  auto x = leaf_of(tape, {2}, {3, -1}, true);
  // loss = sum(x*x + x) -> dL/dx = 2x + 1
  tape.backward(sum(add(mul(x, x), x)));
  CHECK(x.grad()[0] == doctest::Approx(7));
  CHECK(x.grad()[1] == doctest::Approx(-1));
}

TEST_CASE("operands must share a tape") {
  Tape<double> t1, t2;
  auto a = t1.leaf({1}, {1.0}, false);
  auto b = t2.leaf({1}, {2.0}, false);
  CHECK_THROWS_AS(add(a, b), Error);
}

TEST_CASE("relu examples") {
  Tape<double> tape;
  auto x = leaf_of(tape, {3}, {-1, 0, 2});
  auto y = relu(x);
  CHECK(y.value() == std::vector<double>{0, 0, 2});

  auto pos = leaf_of(tape, {4}, {0.5, 1, 2, 3});
  CHECK(relu(pos).value() == pos.value());

  auto g = leaf_of(tape, {2}, {-0.5, 0.5}, true);
  tape.backward(sum(relu(g)));
  CHECK(g.grad()[0] == 0.0);
  CHECK(g.grad()[1] == 1.0);
}

TEST_CASE("conv2d: ones kernel counts overlapping ones") {
  Tape<double> tape;
  auto x = leaf_of(tape, {1, 3, 3}, std::vector<double>(9, 1.0));
  auto w = leaf_of(tape, {1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto b = leaf_of(tape, {1}, {0.0});
  auto y = conv2d(x, w, b, 1);
  CHECK(y.shape() == std::vector<int>{1, 3, 3});
  CHECK(y.value()[4] == 9.0);  // center
  CHECK(y.value()[0] == 4.0);  // corners
  CHECK(y.value()[2] == 4.0);
  CHECK(y.value()[6] == 4.0);
  CHECK(y.value()[8] == 4.0);
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  warpforge::Rng rng(11);
  Tape<double> tape;
  auto x = leaf_of(tape, {2, 5, 5}, oracle::random_vector(50, rng));
  std::vector<double> wdata(2 * 2 * 9, 0.0);
  wdata[0 * 2 * 9 + 0 * 9 + 4] = 1.0;  // channel 0 <- channel 0 center
  wdata[1 * 2 * 9 + 1 * 9 + 4] = 1.0;  // channel 1 <- channel 1 center
  auto w = leaf_of(tape, {2, 2, 3, 3}, wdata);
  auto b = leaf_of(tape, {2}, {0.0, 0.0});
  CHECK(conv2d(x, w, b, 1).value() == x.value());
}

TEST_CASE("conv2d: matches the six-loop oracle") {
  warpforge::Rng rng(12);
  auto xin = oracle::random_vector(2 * 8 * 8, rng);
  auto win = oracle::random_vector(4 * 2 * 3 * 3, rng);
  auto bin = oracle::random_vector(4, rng);
  Tape<double> tape;
  auto y = conv2d(leaf_of(tape, {2, 8, 8}, xin), leaf_of(tape, {4, 2, 3, 3}, win),
                  leaf_of(tape, {4}, bin), 1);
  const auto ref = oracle::conv2d_ref(xin, 2, 8, 8, win, bin, 4, 3, 1);
  REQUIRE(y.value().size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv2d: channel mismatch is a structured error") {
  Tape<double> tape;
  auto x = leaf_of(tape, {3, 4, 4}, std::vector<double>(48, 0.0));
  auto w = leaf_of(tape, {4, 2, 3, 3}, std::vector<double>(72, 0.0));
  auto b = leaf_of(tape, {4}, std::vector<double>(4, 0.0));
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1), doctest::Contains("channels"), Error);
}

TEST_CASE("conv2d: linear in the input with zero bias") {
  warpforge::Rng rng(13);
  auto xa = oracle::random_vector(2 * 6 * 6, rng);
  auto xb = oracle::random_vector(2 * 6 * 6, rng);
  auto wv = oracle::random_vector(3 * 2 * 9, rng);
  const double alpha = 0.7, beta = -1.3;
  Tape<double> tape;
  auto w = leaf_of(tape, {3, 2, 3, 3}, wv);
  auto b = leaf_of(tape, {3}, {0, 0, 0});
  std::vector<double> mix(xa.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * xa[i] + beta * xb[i];
  auto lhs = conv2d(leaf_of(tape, {2, 6, 6}, mix), w, b, 1);
  auto rhs = add(mul_scalar(conv2d(leaf_of(tape, {2, 6, 6}, xa), w, b, 1), alpha),
                 mul_scalar(conv2d(leaf_of(tape, {2, 6, 6}, xb), w, b, 1), beta));
  for (std::size_t i = 0; i < lhs.value().size(); ++i)
    CHECK(lhs.value()[i] == doctest::Approx(rhs.value()[i]).epsilon(1e-12));
}

TEST_CASE("maxpool2x2 examples and oracle") {
  Tape<double> tape;
  auto single = maxpool2x2(leaf_of(tape, {1, 2, 2}, {1, 2, 3, 4}));
  CHECK(single.value() == std::vector<double>{4});

  auto flat = maxpool2x2(leaf_of(tape, {1, 4, 4}, std::vector<double>(16, 0.25)));
  CHECK(flat.shape() == std::vector<int>{1, 2, 2});
  for (double v : flat.value()) CHECK(v == 0.25);

  warpforge::Rng rng(14);
  auto xin = oracle::random_vector(1 * 6 * 6, rng);
  auto pooled = maxpool2x2(leaf_of(tape, {1, 6, 6}, xin));
  CHECK(pooled.value() == oracle::maxpool_ref(xin, 1, 6, 6));

  CHECK_THROWS_AS(maxpool2x2(leaf_of(tape, {1, 3, 4}, std::vector<double>(12, 0.0))), Error);
}

TEST_CASE("maxpool2x2 tie-breaking routes gradient to the first element") {
  Tape<double> tape;
  auto x = leaf_of(tape, {1, 2, 2}, {0.5, 0.5, 0.5, 0.5}, true);
  tape.backward(sum(maxpool2x2(x)));
  CHECK(x.grad() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("upconv2x2 examples and oracle") {
  Tape<double> tape;
  auto one = upconv2x2(leaf_of(tape, {1, 1, 1}, {2.5}), leaf_of(tape, {1, 1, 2, 2}, {1, 1, 1, 1}),
                       leaf_of(tape, {1}, {0.0}));
  CHECK(one.shape() == std::vector<int>{1, 2, 2});
  for (double v : one.value()) CHECK(v == 2.5);

  auto zero = upconv2x2(leaf_of(tape, {1, 2, 2}, {0, 0, 0, 0}),
                        leaf_of(tape, {1, 2, 2, 2}, std::vector<double>(8, 0.3)),
                        leaf_of(tape, {2}, {1.0, -2.0}));
  for (int i = 0; i < 16; ++i) CHECK(zero.value()[i] == 1.0);
  for (int i = 16; i < 32; ++i) CHECK(zero.value()[i] == -2.0);

  warpforge::Rng rng(15);
  auto xin = oracle::random_vector(2 * 4 * 4, rng);
  auto wv = oracle::random_vector(2 * 3 * 4, rng);
  auto bv = oracle::random_vector(3, rng);
  auto up = upconv2x2(leaf_of(tape, {2, 4, 4}, xin), leaf_of(tape, {2, 3, 2, 2}, wv),
                      leaf_of(tape, {3}, bv));
  const auto ref = oracle::upconv2x2_ref(xin, 2, 4, 4, wv, bv, 3);
  REQUIRE(up.value().size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(up.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("upconv2x2 is the adjoint of a stride-2 2x2 convolution") {
  warpforge::Rng rng(16);
  const int cin = 3, cout = 2, h = 6, w = 6;
  auto xv = oracle::random_vector(std::size_t(cin) * h * w, rng);
  auto yv = oracle::random_vector(std::size_t(cout) * (h / 2) * (w / 2), rng);
  auto wv = oracle::random_vector(std::size_t(cin) * cout * 4, rng);

  // <conv_s2(x), y> with weights W
  const auto cx = oracle::conv2x2_s2_ref(xv, cin, h, w, wv, cout);
  double lhs = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * yv[i];

  // <x, upconv(y)>: upconv consumes y (cout channels) and produces cin
  // channels, so the shared weights are indexed {co, ci, dy, dx} on its side.
  std::vector<double> wt(wv.size());
  for (int ci = 0; ci < cin; ++ci)
    for (int co = 0; co < cout; ++co)
      for (int k = 0; k < 4; ++k)
        wt[(std::size_t(co) * cin + ci) * 4 + k] = wv[(std::size_t(ci) * cout + co) * 4 + k];
  Tape<double> tape;
  auto up = upconv2x2(tape.leaf({cout, h / 2, w / 2}, yv, false),
                      tape.leaf({cout, cin, 2, 2}, wt, false),
                      tape.leaf({cin}, std::vector<double>(cin, 0.0), false));
  double rhs = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) rhs += xv[i] * up.value()[i];
  CHECK(rhs == doctest::Approx(lhs).epsilon(1e-10));
}

TEST_CASE("concat_channels stacks, splits and passes empty sides through") {
  Tape<double> tape;
  auto a = leaf_of(tape, {1, 2, 2}, {1, 1, 1, 1});
  auto b = leaf_of(tape, {1, 2, 2}, {0, 0, 0, 0});
  auto c = concat_channels(a, b);
  CHECK(c.shape() == std::vector<int>{2, 2, 2});
  CHECK(c.value() == std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0});

  auto empty = leaf_of(tape, {0, 2, 2}, {});
  CHECK(concat_channels(a, empty).value() == a.value());

  // split(concat(a,b)) == (a,b)
  CHECK(select_channel(c, 0).value() == a.value());
  CHECK(select_channel(c, 1).value() == b.value());

  auto misshaped = leaf_of(tape, {1, 3, 2}, std::vector<double>(6, 0.0));
  CHECK_THROWS_AS(concat_channels(a, misshaped), Error);
}

TEST_CASE("determinism: identical inputs give bitwise-identical op outputs") {
  auto run = [] {
    warpforge::Rng rng(77);
    Tape<float> tape;
    auto x = tape.leaf({2, 8, 8}, [&] {
      std::vector<float> v(128);
      for (auto& e : v) e = float(rng.uniform(-1, 1));
      return v;
    }(), false);
    auto w = tape.leaf({3, 2, 3, 3}, [&] {
      std::vector<float> v(54);
      for (auto& e : v) e = float(rng.uniform(-1, 1));
      return v;
    }(), false);
    auto b = tape.leaf({3}, {0.1f, -0.2f, 0.3f}, false);
    return conv2d(relu(x), w, b, 1).value();
  };
  CHECK(run() == run());
}

TEST_CASE("gradient checks: every differentiable op vs central differences") {
  warpforge::Rng rng(1234);
  const double kTol = 1e-6;

  auto check = [&](const char* name, auto build, std::vector<std::vector<double>> inputs,
                   std::vector<std::vector<int>> shapes) {
    const double err = oracle::gradcheck_rel_error(build, std::move(inputs), std::move(shapes), rng);
    INFO(std::string(name));
    CHECK(err <= kTol);
  };

  auto rnd = [&](std::size_t n, double lo = -1, double hi = 1) {
    return oracle::random_vector(n, rng, lo, hi);
  };

  check("add+mul+sub+div",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          auto safe = add_scalar(square(in[1]), 0.5);  // bounded away from 0
          return sum(div(mul(add(in[0], in[1]), sub(in[0], in[1])), safe));
        },
        {rnd(16), rnd(16)}, {{4, 4}, {4, 4}});

  check("scalar ops, exp, sqrt, log, square",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          auto pos = add_scalar(square(in[0]), 0.3);
          return mean(add(log(pos), sqrt(exp(mul_scalar(in[0], 0.5)))));
        },
        {rnd(16)}, {{16}});

  check("abs away from kinks",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) { return sum(abs(in[0])); },
        {rnd(16, 0.2, 1.0)}, {{16}});

  check("relu away from kinks",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return sum(relu(add_scalar(in[0], 0.0)));
        },
        {[&] {
          auto v = rnd(16);
          for (auto& x : v) x += (x >= 0 ? 0.25 : -0.25);  // keep |x| > 0.2
          return v;
        }()},
        {{16}});

  check("broadcast_scalar and mean",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return sum(square(sub(in[0], broadcast_scalar(mean(in[0]), in[0].shape()))));
        },
        {rnd(25)}, {{5, 5}});

  check("conv2d (input, weight, bias)",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, conv2d(in[0], in[1], in[2], 1), 101);
        },
        {rnd(2 * 16 * 16), rnd(3 * 2 * 9), rnd(3)}, {{2, 16, 16}, {3, 2, 3, 3}, {3}});

  check("maxpool2x2",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, maxpool2x2(in[0]), 102);
        },
        {rnd(1 * 16 * 16)}, {{1, 16, 16}});

  check("upconv2x2 (input, weight, bias)",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, upconv2x2(in[0], in[1], in[2]), 103);
        },
        {rnd(2 * 8 * 8), rnd(2 * 3 * 4), rnd(3)}, {{2, 8, 8}, {2, 3, 2, 2}, {3}});

  check("concat + select + crop + reshape",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          auto cat = concat_channels(in[0], in[1]);
          auto part = crop2d(select_channel(cat, 1), 1, 1, 3, 3);
          return weighted_sum(t, reshape(part, {9}), 104);
        },
        {rnd(1 * 5 * 5), rnd(1 * 5 * 5)}, {{1, 5, 5}, {1, 5, 5}});

  check("window_sum",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, window_sum(in[0], 3), 105);
        },
        {rnd(16 * 16)}, {{16, 16}});

  check("gaussian_blur",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, gaussian_blur(in[0], 1.2), 106);
        },
        {rnd(2 * 12 * 12)}, {{2, 12, 12}});

  check("forward differences",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return add(weighted_sum(t, forward_diff_x(in[0]), 107),
                     weighted_sum(t, forward_diff_y(in[0]), 108));
        },
        {rnd(2 * 9 * 9)}, {{2, 9, 9}});

  check("warp_bilinear wrt field and moving",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return weighted_sum(t, warp_bilinear(in[0], in[1]), 109);
        },
        {rnd(16 * 16, 0.0, 1.0), rnd(2 * 16 * 16, -2.3, 2.3)}, {{16, 16}, {2, 16, 16}});

  check("parzen_mi wrt both images",
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return parzen_mi(in[0], in[1], 8, 1.0 / 7.0);
        },
        {rnd(12 * 12, 0.02, 0.98), rnd(12 * 12, 0.02, 0.98)}, {{12, 12}, {12, 12}});
}

}  // TEST_SUITE
