#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "warpforge/phantom.hpp"
#include "warpforge/similarity.hpp"

using namespace warpforge;

namespace {

Tensor<double> leaf_img(Tape<double>& tape, int h, int w, std::vector<double> v, bool grad = false) {
  return tape.leaf({h, w}, std::move(v), grad);
}

std::vector<double> unit_random(std::size_t n, warpforge::Rng& rng, double lo = 0.0,
                                double hi = 1.0) {
  return oracle::random_vector(n, rng, lo, hi);
}

}  // namespace

TEST_SUITE("similarity") {

TEST_CASE("mse: identical, offset and oracle") {
  warpforge::Rng rng(41);
  Tape<double> tape;
  auto x = unit_random(16 * 16, rng);
  auto d = leaf_img(tape, 16, 16, x);
  CHECK(mse_value(d, d).scalar() == 0.0);

  auto shifted = x;
  for (auto& v : shifted) v += 0.1;
  CHECK(mse_value(d, leaf_img(tape, 16, 16, shifted)).scalar() == doctest::Approx(0.01).epsilon(1e-12));

  auto y = unit_random(16 * 16, rng);
  CHECK(mse_value(d, leaf_img(tape, 16, 16, y)).scalar() ==
        doctest::Approx(oracle::mse_ref(x, y)).epsilon(1e-12));

  CHECK_THROWS_AS(mse_value(d, leaf_img(tape, 8, 8, unit_random(64, rng))), Error);
}

TEST_CASE("pcc: self, affine images and degenerate input") {
  warpforge::Rng rng(42);
  Tape<double> tape;
  auto xv = unit_random(12 * 12, rng);
  auto x = leaf_img(tape, 12, 12, xv);
  CHECK(pcc_value(x, x).scalar() == doctest::Approx(1.0).epsilon(1e-12));

  auto affine_up = xv, affine_down = xv;
  for (auto& v : affine_up) v = 2.5 * v + 0.3;
  for (auto& v : affine_down) v = -1.5 * v + 0.8;
  CHECK(pcc_value(x, leaf_img(tape, 12, 12, affine_up)).scalar() == doctest::Approx(1.0));
  CHECK(pcc_value(x, leaf_img(tape, 12, 12, affine_down)).scalar() == doctest::Approx(-1.0));

  auto flat = leaf_img(tape, 12, 12, std::vector<double>(144, 0.5));
  CHECK_THROWS_AS(pcc_value(x, flat), Error);
}

TEST_CASE("pcc matches the direct-loop oracle") {
  warpforge::Rng rng(43);
  Tape<double> tape;
  auto a = unit_random(16 * 16, rng);
  auto b = unit_random(16 * 16, rng);
  CHECK(pcc_value(leaf_img(tape, 16, 16, a), leaf_img(tape, 16, 16, b)).scalar() ==
        doctest::Approx(oracle::pcc_ref(a, b)).epsilon(1e-12));
}

TEST_CASE("pcc loss is invariant to positive affine rescaling of one side") {
  warpforge::Rng rng(44);
  Tape<double> tape;
  auto d = unit_random(10 * 10, rng);
  auto f = unit_random(10 * 10, rng);
  auto f_scaled = f;
  for (auto& v : f_scaled) v = 3.7 * v + 0.2;
  const double base = pcc_value(leaf_img(tape, 10, 10, d), leaf_img(tape, 10, 10, f)).scalar();
  const double scaled =
      pcc_value(leaf_img(tape, 10, 10, d), leaf_img(tape, 10, 10, f_scaled)).scalar();
  CHECK(std::fabs(base - scaled) <= 1e-10);
}

TEST_CASE("local cc: identical images, flat images and oracle") {
  warpforge::Rng rng(45);
  Tape<double> tape;
  auto xv = unit_random(8 * 8, rng);
  auto x = leaf_img(tape, 8, 8, xv);
  const int windows = 6 * 6;
  // numerator == denominator in every window up to the epsilon guard
  CHECK(local_cc_value(x, x, 3, 1e-5).scalar() == doctest::Approx(windows).epsilon(1e-3));

  auto flat = leaf_img(tape, 8, 8, std::vector<double>(64, 0.25));
  CHECK(local_cc_value(flat, flat, 3, 1e-5).scalar() == doctest::Approx(0.0));

  auto yv = unit_random(8 * 8, rng);
  CHECK(local_cc_value(x, leaf_img(tape, 8, 8, yv), 3, 1e-5).scalar() ==
        doctest::Approx(oracle::local_cc_ref(xv, yv, 8, 8, 3, 1e-5)).epsilon(1e-10));
}

TEST_CASE("mi: independent images carry almost no information") {
  const int m = 64;
  std::vector<double> gx(std::size_t(m) * m), gy(std::size_t(m) * m);
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      gx[std::size_t(y) * m + x] = double(x) / (m - 1);
      gy[std::size_t(y) * m + x] = double(y) / (m - 1);
    }
  Tape<double> tape;
  const double mi = mi_value(leaf_img(tape, m, m, gx), leaf_img(tape, m, m, gy), 32, 1.0 / 31.0)
                        .scalar();
  CHECK(mi >= 0.0);
  CHECK(mi < 0.05);
  CHECK(oracle::histogram_mi_ref(gx, gy, 32) < 0.05);
}

TEST_CASE("mi: two-level self image gives log 2 nats") {
  const int m = 16;
  std::vector<double> two(std::size_t(m) * m, 0.0);
  for (std::size_t i = two.size() / 2; i < two.size(); ++i) two[i] = 1.0;
  Tape<double> tape;
  auto img = leaf_img(tape, m, m, two);
  const double mi = mi_value(img, img, 32, 0.5 / 31.0).scalar();
  CHECK(mi == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  // the MI loss at (x, x) is minus the level entropy
  SimilaritySpec spec;
  spec.kind = SimilarityKind::mi;
  spec.mi_bins = 32;
  spec.mi_sigma = 0.5 / 31.0;
  CHECK(similarity_loss(img, img, spec).scalar() == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("mi is symmetric") {
  warpforge::Rng rng(46);
  Tape<double> tape;
  auto a = unit_random(12 * 12, rng);
  auto b = unit_random(12 * 12, rng);
  const double ab = mi_value(leaf_img(tape, 12, 12, a), leaf_img(tape, 12, 12, b), 16, 1.0 / 15).scalar();
  const double ba = mi_value(leaf_img(tape, 12, 12, b), leaf_img(tape, 12, 12, a), 16, 1.0 / 15).scalar();
  CHECK(std::fabs(ab - ba) <= 1e-10);
}

TEST_CASE("mi rejects non-normalized intensities") {
  Tape<double> tape;
  auto bad = leaf_img(tape, 4, 4, std::vector<double>(16, 3.0));
  auto ok = leaf_img(tape, 4, 4, std::vector<double>(16, 0.5));
  CHECK_THROWS_AS(mi_value(bad, ok, 8, 0.2), Error);
}

TEST_CASE("mi approaches histogram mi on quantized images as sigma shrinks") {
  warpforge::Rng rng(47);
  const int m = 48;
  // quantize to four well-separated levels on the anchor grid
  std::vector<double> d(std::size_t(m) * m), f(d.size());
  const double levels[4] = {0.0, 1.0 / 3, 2.0 / 3, 1.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = levels[int(rng.uniform(0, 4)) % 4];
    f[i] = rng.uniform() < 0.7 ? d[i] : levels[int(rng.uniform(0, 4)) % 4];
  }
  const double hist = oracle::histogram_mi_ref(d, f, 32);
  Tape<double> tape;
  auto dt = leaf_img(tape, m, m, d);
  auto ft = leaf_img(tape, m, m, f);
  const double spacing = 1.0 / 31.0;
  const double at_spacing = mi_value(dt, ft, 32, spacing).scalar();
  const double at_3spacing = mi_value(dt, ft, 32, 3 * spacing).scalar();
  CHECK(std::fabs(at_spacing - hist) / hist <= 0.05);
  CHECK(std::fabs(at_spacing - hist) <= std::fabs(at_3spacing - hist));
}

TEST_CASE("ssim: self similarity is exactly one") {
  warpforge::Rng rng(48);
  Tape<double> tape;
  auto x = leaf_img(tape, 16, 16, unit_random(16 * 16, rng));
  CHECK(ssim_value(x, x, 7, 1e-4, 9e-4).scalar() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: single 5x5 window matches direct statistics") {
  warpforge::Rng rng(49);
  Tape<double> tape;
  auto a = unit_random(25, rng);
  auto b = unit_random(25, rng);
  CHECK(ssim_value(leaf_img(tape, 5, 5, a), leaf_img(tape, 5, 5, b), 5, 1e-4, 9e-4).scalar() ==
        doctest::Approx(oracle::ssim_ref(a, b, 5, 5, 5, 1e-4, 9e-4)).epsilon(1e-12));
}

TEST_CASE("ssim matches the sliding-window oracle on random pairs") {
  warpforge::Rng rng(50);
  Tape<double> tape;
  auto a = unit_random(16 * 16, rng);
  auto b = unit_random(16 * 16, rng);
  CHECK(ssim_value(leaf_img(tape, 16, 16, a), leaf_img(tape, 16, 16, b), 7, 1e-4, 9e-4).scalar() ==
        doctest::Approx(oracle::ssim_ref(a, b, 16, 16, 7, 1e-4, 9e-4)).epsilon(1e-10));
}

TEST_CASE("noise collapses ssim while pcc stays high; blur keeps ssim high") {
  // sigma = 0.1 keeps the noise well under the phantom's pixel std (~0.29),
  // so correlation survives while windowed structure does not
  const Image phantom = make_phantom({PhantomKind::shepp_logan, 128}).image;
  const Image noisy = corrupt(phantom, 0.1, 0.0, 99);
  const Image blurred = corrupt(phantom, 0.0, 1.5);
  CHECK(eval_pcc(noisy, phantom) > 0.9);
  CHECK(eval_ssim(noisy, phantom) < 0.5);
  CHECK(eval_ssim(blurred, phantom) > 0.8);
  CHECK(eval_pcc(blurred, phantom) > 0.9);
}

TEST_CASE("ssim+pcc combines the two losses with equal weight") {
  warpforge::Rng rng(51);
  Tape<double> tape;
  auto a = leaf_img(tape, 12, 12, unit_random(12 * 12, rng));
  auto b = leaf_img(tape, 12, 12, unit_random(12 * 12, rng));
  SimilaritySpec spec;  // defaults: 7x7 window, unit-range constants
  const double combined = ssim_pcc_loss(a, b, spec).scalar();
  const double ssim = ssim_value(a, b, spec.ssim_window, spec.ssim_c1, spec.ssim_c2).scalar();
  const double pcc = pcc_value(a, b).scalar();
  CHECK(combined == doctest::Approx(0.5 * (1 - ssim) + 0.5 * (1 - pcc)).epsilon(1e-12));
  CHECK(ssim_pcc_loss(a, a, spec).scalar() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("losses vanish (or hit their minima) on identical inputs") {
  warpforge::Rng rng(52);
  Tape<double> tape;
  auto x = leaf_img(tape, 10, 10, unit_random(100, rng));
  SimilaritySpec spec;
  for (auto kind : {SimilarityKind::mse, SimilarityKind::pcc, SimilarityKind::ssim,
                    SimilarityKind::ssim_pcc}) {
    spec.kind = kind;
    CHECK(similarity_loss(x, x, spec).scalar() == doctest::Approx(0.0).epsilon(1e-10));
  }
  spec.kind = SimilarityKind::local_cc;
  CHECK(similarity_loss(x, x, spec).scalar() == doctest::Approx(-64.0).epsilon(1e-3));
}

TEST_CASE("mse, pcc and ssim are symmetric in their arguments") {
  warpforge::Rng rng(53);
  Tape<double> tape;
  auto a = leaf_img(tape, 14, 14, unit_random(196, rng));
  auto b = leaf_img(tape, 14, 14, unit_random(196, rng));
  CHECK(std::fabs(mse_value(a, b).scalar() - mse_value(b, a).scalar()) <= 1e-12);
  CHECK(std::fabs(pcc_value(a, b).scalar() - pcc_value(b, a).scalar()) <= 1e-10);
  CHECK(std::fabs(ssim_value(a, b, 7, 1e-4, 9e-4).scalar() -
                  ssim_value(b, a, 7, 1e-4, 9e-4).scalar()) <= 1e-10);
}

TEST_CASE("every loss gradient matches finite differences on random 16x16 pairs") {
  warpforge::Rng rng(54);
  SimilaritySpec spec;
  for (auto kind : {SimilarityKind::mse, SimilarityKind::pcc, SimilarityKind::local_cc,
                    SimilarityKind::mi, SimilarityKind::ssim, SimilarityKind::ssim_pcc}) {
    spec.kind = kind;
    spec.mi_bins = 8;  // keeps the parzen kernels well supported on 16x16
    const double err = oracle::gradcheck_rel_error(
        [&](Tape<double>& t, std::vector<Tensor<double>>& in) {
          return similarity_loss(in[0], in[1], spec);
        },
        {unit_random(16 * 16, rng, 0.05, 0.95), unit_random(16 * 16, rng, 0.05, 0.95)},
        {{16, 16}, {16, 16}}, rng);
    INFO("kind = ", to_string(kind));
    CHECK(err <= 1e-5);
  }
}

}  // TEST_SUITE
