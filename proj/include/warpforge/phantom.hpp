#pragma once

#include <cstdint>
#include <string>

#include "warpforge/image.hpp"

namespace warpforge {

enum class PhantomKind { shepp_logan, ellipse_body };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::shepp_logan;
  int size = 128;            // M; >= 32 and divisible by 8
  double noise_sigma = 0.0;  // additive Gaussian noise, clamped to [0,1]
  double blur_sigma = 0.0;   // Gaussian blur, pixels
};

struct Phantom {
  Image image;
  LabelMap labels;
};

// Deterministic phantom with a consistent label map (one label per ellipse,
// background 0).
Phantom make_phantom(const PhantomSpec& spec);

int phantom_ellipse_count(PhantomKind kind);

// Ground truth for desk-scale experiments: a Gaussian-smoothed random field
// rescaled to max_displacement, regenerated until it is fold-free.
struct SyntheticWarpSpec {
  double max_displacement = 4.0;  // pixels
  double smoothness_sigma = 8.0;  // pixels; >= 2
  uint64_t seed = 0;
};

DisplacementField make_ground_truth_warp(const SyntheticWarpSpec& spec, int size);

// Additive Gaussian noise (clamped to [0,1]) and/or Gaussian blur.
Image corrupt(const Image& image, double noise_sigma, double blur_sigma, uint64_t seed = 0);

PhantomKind parse_phantom_kind(const std::string& name);
const char* to_string(PhantomKind kind);

}  // namespace warpforge
