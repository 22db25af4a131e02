#pragma once

#include <cstdint>
#include <vector>

#include "warpforge/error.hpp"

namespace warpforge {

// 2D scalar image, intensities normalized to [0,1] at ingestion.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> values;  // row-major

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), values(std::size_t(h) * w, fill) {}

  float& at(int y, int x) { return values[std::size_t(y) * width + x]; }
  float at(int y, int x) const { return values[std::size_t(y) * width + x]; }
  std::size_t pixel_count() const { return std::size_t(height) * width; }
};

// Per-pixel displacement u(p) in pixel units, stored as two planes
// (u_x then u_y, each row-major). The deformation is phi = Id + u and the
// warp samples the source at p - u(p).
struct DisplacementField {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // 2*H*W: u_x plane then u_y plane

  DisplacementField() = default;
  DisplacementField(int h, int w) : height(h), width(w), data(2 * std::size_t(h) * w, 0.0f) {}

  std::size_t plane() const { return std::size_t(height) * width; }
  float& ux(int y, int x) { return data[std::size_t(y) * width + x]; }
  float ux(int y, int x) const { return data[std::size_t(y) * width + x]; }
  float& uy(int y, int x) { return data[plane() + std::size_t(y) * width + x]; }
  float uy(int y, int x) const { return data[plane() + std::size_t(y) * width + x]; }
};

// Integer organ/tissue labels on the image grid.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int32_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, int32_t fill = 0) : height(h), width(w), labels(std::size_t(h) * w, fill) {}

  int32_t& at(int y, int x) { return labels[std::size_t(y) * width + x]; }
  int32_t at(int y, int x) const { return labels[std::size_t(y) * width + x]; }
};

inline void check_same_size(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width)
    fail_shape(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
               std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
               std::to_string(b.height) + ")");
}

// Resamples the moving image under phi = Id + u with bilinear interpolation
// and border clamping.
Image warp_bilinear(const Image& moving, const DisplacementField& field);

// Nearest-neighbor label warp; output labels are a subset of input labels.
LabelMap warp_nearest(const LabelMap& labels, const DisplacementField& field);

}  // namespace warpforge
