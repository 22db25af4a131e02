#pragma once

#include <cmath>

namespace warpforge {

// Bilinear sample of an HxW image at (sx, sy), pixel coordinates.
// Out-of-bounds coordinates clamp to the border; the coordinate derivative
// is zeroed when the raw coordinate was strictly outside, matching the
// subgradient of the clamp. At exactly-integer interior coordinates the
// floor-based cell gives the right-cell derivative.
template <typename T>
struct BilinearTap {
  T value;
  T d_dsx, d_dsy;      // derivative of value w.r.t. the sample coordinates
  int x0, x1, y0, y1;  // corner indices
  T w00, w01, w10, w11;  // corner weights (row = y, col = x)
};

template <typename T>
inline BilinearTap<T> bilinear_sample(const T* img, int h, int w, T sx, T sy) {
  BilinearTap<T> tap;
  T cx = sx, cy = sy;
  bool in_x = true, in_y = true;
  if (!(cx >= T(0))) { cx = T(0); in_x = false; }  // also catches NaN
  if (cx > T(w - 1)) { cx = T(w - 1); in_x = false; }
  if (!(cy >= T(0))) { cy = T(0); in_y = false; }
  if (cy > T(h - 1)) { cy = T(h - 1); in_y = false; }
  const int x0 = int(std::floor(cx));
  const int y0 = int(std::floor(cy));
  const int x1 = x0 + 1 < w ? x0 + 1 : w - 1;
  const int y1 = y0 + 1 < h ? y0 + 1 : h - 1;
  const T fx = cx - T(x0);
  const T fy = cy - T(y0);
  const T v00 = img[std::size_t(y0) * w + x0];
  const T v01 = img[std::size_t(y0) * w + x1];
  const T v10 = img[std::size_t(y1) * w + x0];
  const T v11 = img[std::size_t(y1) * w + x1];
  tap.value = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
  tap.d_dsx = in_x ? (T(1) - fy) * (v01 - v00) + fy * (v11 - v10) : T(0);
  tap.d_dsy = in_y ? (T(1) - fx) * (v10 - v00) + fx * (v11 - v01) : T(0);
  tap.x0 = x0; tap.x1 = x1; tap.y0 = y0; tap.y1 = y1;
  tap.w00 = (T(1) - fy) * (T(1) - fx);
  tap.w01 = (T(1) - fy) * fx;
  tap.w10 = fy * (T(1) - fx);
  tap.w11 = fy * fx;
  return tap;
}

// Pull-warp: output(p) samples the source at p - u(p).
template <typename T>
inline void warp_bilinear_kernel(const T* img, int h, int w, const T* ux, const T* uy, T* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      out[i] = bilinear_sample(img, h, w, T(x) - ux[i], T(y) - uy[i]).value;
    }
  }
}

// Nearest-neighbor pull-warp for integer label planes. Rounds half up.
template <typename L, typename T>
inline void warp_nearest_kernel(const L* labels, int h, int w, const T* ux, const T* uy, L* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      T vx = T(x) - ux[i] + T(0.5);
      T vy = T(y) - uy[i] + T(0.5);
      if (!(vx >= T(0))) vx = T(0);  // also catches NaN
      if (vx > T(w - 1)) vx = T(w - 1);
      if (!(vy >= T(0))) vy = T(0);
      if (vy > T(h - 1)) vy = T(h - 1);
      out[i] = labels[std::size_t(int(vy)) * w + int(vx)];
    }
  }
}

}  // namespace warpforge
