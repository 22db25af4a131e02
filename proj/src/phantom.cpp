#include "warpforge/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "warpforge/analyze.hpp"
#include "warpforge/rng.hpp"
#include "warpforge/tensor_image.hpp"

namespace warpforge {

namespace {

struct Ellipse {
  double intensity;  // additive
  double a, b;       // semi-axes in [-1,1]^2 coordinates
  double x0, y0;
  double phi_deg;
};

// Classic Shepp-Logan head phantom; intensities add where ellipses overlap.
const Ellipse kSheppLogan[] = {
    {2.00, 0.6900, 0.9200, 0.00, 0.0000, 0},
    {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0},
    {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18},
    {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18},
    {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0},
    {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0},
    {0.02, 0.0460, 0.0460, 0.00, -0.1000, 0},
    {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0},
    {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0},
    {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0},
};

// Torso-like nested ellipses standing in for an attenuation map with organ
// labels: body, two lungs, spine, heart, liver.
const Ellipse kEllipseBody[] = {
    {0.35, 0.9000, 0.6500, 0.00, 0.0000, 0},
    {-0.30, 0.3300, 0.4200, -0.42, 0.0500, 8},
    {-0.30, 0.3300, 0.4200, 0.42, 0.0500, -8},
    {0.55, 0.1100, 0.1100, 0.00, -0.4400, 0},
    {0.18, 0.2000, 0.2400, 0.12, 0.1800, -20},
    {0.22, 0.2800, 0.1800, -0.30, -0.2200, 15},
};

template <std::size_t N>
Phantom rasterize(const Ellipse (&ellipses)[N], int size) {
  Phantom phantom;
  phantom.image = Image(size, size);
  phantom.labels = LabelMap(size, size);
  std::vector<double> acc(std::size_t(size) * size, 0.0);
  for (std::size_t e = 0; e < N; ++e) {
    const auto& el = ellipses[e];
    const double phi = el.phi_deg * 3.14159265358979323846 / 180.0;
    const double cp = std::cos(phi), sp = std::sin(phi);
    const double aa = el.a * el.a, bb = el.b * el.b;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        // pixel centers in [-1, 1]^2, y growing upward like the usual tables
        const double xn = 2.0 * (x + 0.5) / size - 1.0 - el.x0;
        const double yn = 1.0 - 2.0 * (y + 0.5) / size - el.y0;
        const double t1 = xn * cp + yn * sp;
        const double t2 = yn * cp - xn * sp;
        if (t1 * t1 / aa + t2 * t2 / bb <= 1.0) {
          acc[std::size_t(y) * size + x] += el.intensity;
          phantom.labels.at(y, x) = int32_t(e + 1);
        }
      }
    }
  }
  double peak = 0.0;
  for (double v : acc) peak = std::max(peak, v);
  if (peak <= 0.0) peak = 1.0;
  for (std::size_t i = 0; i < acc.size(); ++i)
    phantom.image.values[i] = float(std::clamp(acc[i] / peak, 0.0, 1.0));
  return phantom;
}

}  // namespace

int phantom_ellipse_count(PhantomKind kind) {
  return kind == PhantomKind::shepp_logan ? int(std::size(kSheppLogan)) : int(std::size(kEllipseBody));
}

Phantom make_phantom(const PhantomSpec& spec) {
  if (spec.size < 32 || spec.size % 8 != 0)
    fail(ErrorCode::invalid_argument, "phantom: size must be >= 32 and divisible by 8");
  Phantom phantom = spec.kind == PhantomKind::shepp_logan ? rasterize(kSheppLogan, spec.size)
                                                          : rasterize(kEllipseBody, spec.size);
  if (spec.noise_sigma > 0 || spec.blur_sigma > 0)
    phantom.image = corrupt(phantom.image, spec.noise_sigma, spec.blur_sigma);
  return phantom;
}

DisplacementField make_ground_truth_warp(const SyntheticWarpSpec& spec, int size) {
  if (spec.smoothness_sigma < 2)
    fail(ErrorCode::invalid_argument, "ground_truth_warp: smoothness sigma must be >= 2");
  DisplacementField field(size, size);
  if (spec.max_displacement == 0) return field;
  if (spec.max_displacement < 0)
    fail(ErrorCode::invalid_argument, "ground_truth_warp: max_displacement must be >= 0");

  Rng rng(spec.seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<float> noise(field.data.size());
    for (auto& v : noise) v = float(rng.normal());
    Tape<float> tape;
    auto smoothed = gaussian_blur(tape.leaf({2, size, size}, std::move(noise), false),
                                  spec.smoothness_sigma);
    field.data = smoothed.value();
    double peak = 0.0;
    const std::size_t plane = field.plane();
    for (std::size_t i = 0; i < plane; ++i) {
      const double mag = std::hypot(double(field.data[i]), double(field.data[plane + i]));
      peak = std::max(peak, mag);
    }
    if (peak == 0.0) continue;
    const float scale = float(spec.max_displacement / peak);
    for (auto& v : field.data) v *= scale;
    if (fold_report(field).fold_count == 0) return field;
  }
  fail(ErrorCode::numeric,
       "ground_truth_warp: no fold-free field after 100 attempts; reduce max_displacement or "
       "increase smoothness");
}

Image corrupt(const Image& image, double noise_sigma, double blur_sigma, uint64_t seed) {
  Image out = image;
  if (blur_sigma > 0) {
    Tape<float> tape;
    out.values =
        gaussian_blur(tape.leaf({out.height, out.width}, out.values, false), blur_sigma).value();
  }
  if (noise_sigma > 0) {
    Rng rng(seed);
    for (auto& v : out.values)
      v = std::clamp(v + float(noise_sigma * rng.normal()), 0.0f, 1.0f);
  }
  return out;
}

PhantomKind parse_phantom_kind(const std::string& name) {
  if (name == "shepp") return PhantomKind::shepp_logan;
  if (name == "body") return PhantomKind::ellipse_body;
  fail(ErrorCode::invalid_argument, "unknown phantom kind '" + name + "' (expected shepp|body)");
}

const char* to_string(PhantomKind kind) {
  return kind == PhantomKind::shepp_logan ? "shepp" : "body";
}

}  // namespace warpforge
