#pragma once

#include <vector>

#include "warpforge/gemm.hpp"
#include "warpforge/tensor.hpp"
#include "warpforge/warp_kernel.hpp"

namespace warpforge {

// ---- forward differences (one-sided, zero at the trailing row/column) ----

template <typename T>
Tensor<T> forward_diff_x(const Tensor<T>& u) {
  const auto& s = u.shape();
  if (s.size() != 3) fail_shape("forward_diff_x: input must be CxHxW");
  const int c = s[0], h = s[1], w = s[2];
  std::vector<T> out(u.value().size(), T(0));
  const auto& uv = u.value();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      const std::size_t row = (std::size_t(ci) * h + y) * w;
      for (int x = 0; x + 1 < w; ++x) out[row + x] = uv[row + x + 1] - uv[row + x];
    }
  int iu = u.node();
  return u.tape()->emit({c, h, w}, std::move(out), {iu}, [iu, c, h, w](Tape<T>& t, int self) {
    if (!t.node(iu).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& du = t.grad_buf(iu);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y) {
        const std::size_t row = (std::size_t(ci) * h + y) * w;
        for (int x = 0; x + 1 < w; ++x) {
          du[row + x + 1] += g[row + x];
          du[row + x] -= g[row + x];
        }
      }
  });
}

template <typename T>
Tensor<T> forward_diff_y(const Tensor<T>& u) {
  const auto& s = u.shape();
  if (s.size() != 3) fail_shape("forward_diff_y: input must be CxHxW");
  const int c = s[0], h = s[1], w = s[2];
  std::vector<T> out(u.value().size(), T(0));
  const auto& uv = u.value();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y + 1 < h; ++y) {
      const std::size_t row = (std::size_t(ci) * h + y) * w;
      for (int x = 0; x < w; ++x) out[row + x] = uv[row + w + x] - uv[row + x];
    }
  int iu = u.node();
  return u.tape()->emit({c, h, w}, std::move(out), {iu}, [iu, c, h, w](Tape<T>& t, int self) {
    if (!t.node(iu).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& du = t.grad_buf(iu);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y + 1 < h; ++y) {
        const std::size_t row = (std::size_t(ci) * h + y) * w;
        for (int x = 0; x < w; ++x) {
          du[row + w + x] += g[row + x];
          du[row + x] -= g[row + x];
        }
      }
  });
}

// ---- windowed box sums over all fully-contained (valid) positions ----

template <typename T>
Tensor<T> window_sum(const Tensor<T>& x, int window) {
  const auto& s = x.shape();
  if (s.size() != 2) fail_shape("window_sum: input must be HxW");
  const int h = s[0], w = s[1];
  if (window < 1 || window > h || window > w)
    fail(ErrorCode::invalid_argument, "window_sum: window must be in [1, min(H,W)]");
  const int ho = h - window + 1, wo = w - window + 1;
  const auto& xv = x.value();
  // Horizontal running sums, then vertical.
  std::vector<T> rows(std::size_t(h) * wo);
  for (int y = 0; y < h; ++y) {
    const T* src = xv.data() + std::size_t(y) * w;
    T acc = T(0);
    for (int i = 0; i < window; ++i) acc += src[i];
    rows[std::size_t(y) * wo] = acc;
    for (int xpos = 1; xpos < wo; ++xpos) {
      acc += src[xpos + window - 1] - src[xpos - 1];
      rows[std::size_t(y) * wo + xpos] = acc;
    }
  }
  std::vector<T> out(std::size_t(ho) * wo);
  for (int xpos = 0; xpos < wo; ++xpos) {
    T acc = T(0);
    for (int i = 0; i < window; ++i) acc += rows[std::size_t(i) * wo + xpos];
    out[xpos] = acc;
    for (int y = 1; y < ho; ++y) {
      acc += rows[std::size_t(y + window - 1) * wo + xpos] - rows[std::size_t(y - 1) * wo + xpos];
      out[std::size_t(y) * wo + xpos] = acc;
    }
  }
  int ix = x.node();
  return x.tape()->emit({ho, wo}, std::move(out), {ix}, [ix, h, w, window, ho, wo](Tape<T>& t, int self) {
    if (!t.node(ix).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& dx = t.grad_buf(ix);
    for (int y = 0; y < ho; ++y)
      for (int xpos = 0; xpos < wo; ++xpos) {
        const T gv = g[std::size_t(y) * wo + xpos];
        if (gv == T(0)) continue;
        for (int dy = 0; dy < window; ++dy) {
          T* row = dx.data() + std::size_t(y + dy) * w + xpos;
          for (int dxp = 0; dxp < window; ++dxp) row[dxp] += gv;
        }
      }
  });
}

// ---- fixed Gaussian blur (separable, reflective border) ----

inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) fail(ErrorCode::invalid_argument, "gaussian_kernel: sigma must be > 0");
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> k(std::size_t(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[std::size_t(i + radius)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    total += k[std::size_t(i + radius)];
  }
  for (auto& v : k) v /= total;
  return k;
}

namespace blur_detail {

inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// One separable pass along x (horizontal=true) or y. adjoint=true runs the
// transpose (scatter with the same reflected indexing).
template <typename T>
void pass(const T* in, T* out, int h, int w, const std::vector<T>& k, bool horizontal,
          bool adjoint) {
  const int radius = int(k.size() / 2);
  if (!adjoint) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T acc = T(0);
        for (int i = -radius; i <= radius; ++i) {
          const int xx = horizontal ? reflect(x + i, w) : x;
          const int yy = horizontal ? y : reflect(y + i, h);
          acc += k[std::size_t(i + radius)] * in[std::size_t(yy) * w + xx];
        }
        out[std::size_t(y) * w + x] = acc;
      }
  } else {
    for (std::size_t i = 0; i < std::size_t(h) * w; ++i) out[i] = T(0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T gv = in[std::size_t(y) * w + x];
        for (int i = -radius; i <= radius; ++i) {
          const int xx = horizontal ? reflect(x + i, w) : x;
          const int yy = horizontal ? y : reflect(y + i, h);
          out[std::size_t(yy) * w + xx] += k[std::size_t(i + radius)] * gv;
        }
      }
  }
}

template <typename T>
void blur_plane(const T* in, T* out, int h, int w, const std::vector<T>& k, bool adjoint) {
  std::vector<T> tmp(std::size_t(h) * w);
  if (!adjoint) {
    pass(in, tmp.data(), h, w, k, true, false);
    pass(tmp.data(), out, h, w, k, false, false);
  } else {
    pass(in, tmp.data(), h, w, k, false, true);
    pass(tmp.data(), out, h, w, k, true, true);
  }
}

}  // namespace blur_detail

// Differentiable fixed-kernel Gaussian blur of an HxW or CxHxW tensor.
// Kernel truncated at radius ceil(3*sigma), normalized to unit sum.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma) {
  const auto& s = x.shape();
  int c, h, w;
  if (s.size() == 2) { c = 1; h = s[0]; w = s[1]; }
  else if (s.size() == 3) { c = s[0]; h = s[1]; w = s[2]; }
  else fail_shape("gaussian_blur: input must be HxW or CxHxW");
  const auto kd = gaussian_kernel(sigma);
  std::vector<T> k(kd.begin(), kd.end());
  std::vector<T> out(x.value().size());
  for (int ci = 0; ci < c; ++ci)
    blur_detail::blur_plane(x.value().data() + std::size_t(ci) * h * w,
                            out.data() + std::size_t(ci) * h * w, h, w, k, false);
  int ix = x.node();
  return x.tape()->emit(s, std::move(out), {ix}, [ix, c, h, w, k = std::move(k)](Tape<T>& t, int self) {
    if (!t.node(ix).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& dx = t.grad_buf(ix);
    std::vector<T> adj(std::size_t(h) * w);
    for (int ci = 0; ci < c; ++ci) {
      blur_detail::blur_plane(g.data() + std::size_t(ci) * h * w, adj.data(), h, w, k, true);
      T* dst = dx.data() + std::size_t(ci) * h * w;
      for (std::size_t i = 0; i < adj.size(); ++i) dst[i] += adj[i];
    }
  });
}

// ---- differentiable warp: moving {H,W} sampled at p - u(p), field {2,H,W} ----

template <typename T>
Tensor<T> warp_bilinear(const Tensor<T>& moving, const Tensor<T>& field) {
  auto& tape = op_detail::same_tape(moving, field);
  const auto& ms = moving.shape();
  const auto& fs = field.shape();
  if (ms.size() != 2) fail_shape("warp_bilinear: moving must be HxW");
  if (fs.size() != 3 || fs[0] != 2 || fs[1] != ms[0] || fs[2] != ms[1])
    fail_shape("warp_bilinear: field must be 2x" + std::to_string(ms[0]) + "x" +
               std::to_string(ms[1]) + ", got " + shape_str(fs));
  const int h = ms[0], w = ms[1];
  const std::size_t hw = std::size_t(h) * w;
  const T* img = moving.value().data();
  const T* ux = field.value().data();
  const T* uy = field.value().data() + hw;
  std::vector<T> out(hw);
  warp_bilinear_kernel(img, h, w, ux, uy, out.data());
  int im = moving.node(), ifd = field.node();
  auto bwd = [im, ifd, h, w](Tape<T>& t, int self) {
    const std::size_t hw = std::size_t(h) * w;
    const auto& g = t.node(self).grad;
    const T* img = t.node(im).value.data();
    const T* ux = t.node(ifd).value.data();
    const T* uy = t.node(ifd).value.data() + hw;
    const bool need_m = t.node(im).requires_grad;
    const bool need_f = t.node(ifd).requires_grad;
    T* dm = need_m ? t.grad_buf(im).data() : nullptr;
    T* df = need_f ? t.grad_buf(ifd).data() : nullptr;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        const T gv = g[i];
        if (gv == T(0)) continue;
        const auto tap = bilinear_sample(img, h, w, T(x) - ux[i], T(y) - uy[i]);
        if (need_f) {
          df[i] -= gv * tap.d_dsx;       // d/d(u_x) = -d/d(s_x)
          df[hw + i] -= gv * tap.d_dsy;
        }
        if (need_m) {
          dm[std::size_t(tap.y0) * w + tap.x0] += gv * tap.w00;
          dm[std::size_t(tap.y0) * w + tap.x1] += gv * tap.w01;
          dm[std::size_t(tap.y1) * w + tap.x0] += gv * tap.w10;
          dm[std::size_t(tap.y1) * w + tap.x1] += gv * tap.w11;
        }
      }
  };
  return tape.emit({h, w}, std::move(out), {im, ifd}, std::move(bwd));
}

// ---- mutual information with a Gaussian Parzen joint density ----
//
// Intensity anchors sit at j/(bins-1). The unnormalized joint is
// W[a][b] = sum_i exp(-(f_i-a)^2/2s^2) * exp(-(d_i-b)^2/2s^2); constant
// prefactors cancel once the joint is normalized to unit mass. MI uses the
// 0*log0 := 0 convention; gradient cells of empty bins are masked to match.
template <typename T>
Tensor<T> parzen_mi(const Tensor<T>& d, const Tensor<T>& f, int bins, double sigma) {
  auto& tape = op_detail::same_tape(d, f);
  if (d.numel() != f.numel()) fail_shape("parzen_mi: operand sizes differ");
  if (bins < 2) fail(ErrorCode::invalid_argument, "parzen_mi: bins must be >= 2");
  if (!(sigma > 0)) fail(ErrorCode::invalid_argument, "parzen_mi: sigma must be > 0");
  const std::size_t n = std::size_t(d.numel());
  for (const auto* t : {&d, &f})
    for (T v : t->value())
      if (!(v >= T(-1e-6) && v <= T(1) + T(1e-6)))
        fail(ErrorCode::invalid_argument, "parzen_mi: intensities must be normalized to [0,1]");

  const T inv2s2 = T(1.0 / (2.0 * sigma * sigma));
  auto kernel_table = [&](const std::vector<T>& v) {
    std::vector<T> a(n * std::size_t(bins));
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < bins; ++j) {
        const T delta = v[i] - T(j) / T(bins - 1);
        a[i * bins + j] = std::exp(-delta * delta * inv2s2);
      }
    return a;
  };
  std::vector<T> fa = kernel_table(f.value());
  std::vector<T> db = kernel_table(d.value());

  // joint[a][b] = sum_i fa[i][a] * db[i][b]
  std::vector<T> joint(std::size_t(bins) * bins);
  gemm<T>(bins, bins, int(n), fa.data(), 1, bins, db.data(), bins, 1, joint.data(), bins, false);

  T total = T(0);
  for (T v : joint) total += v;
  if (!(total > T(0))) fail(ErrorCode::numeric, "parzen_mi: joint density vanished");
  std::vector<T> row(bins, T(0)), colsum(bins, T(0));
  for (int a = 0; a < bins; ++a)
    for (int b = 0; b < bins; ++b) {
      row[a] += joint[std::size_t(a) * bins + b];
      colsum[b] += joint[std::size_t(a) * bins + b];
    }
  T mi = T(0);
  for (int a = 0; a < bins; ++a)
    for (int b = 0; b < bins; ++b) {
      const T wv = joint[std::size_t(a) * bins + b];
      if (wv > T(0)) mi += wv / total * std::log(total * wv / (row[a] * colsum[b]));
    }

  int id = d.node(), ifx = f.node();
  auto bwd = [id, ifx, bins, inv2s2, total, mi, joint = std::move(joint), row = std::move(row),
              colsum = std::move(colsum), fa = std::move(fa),
              db = std::move(db)](Tape<T>& t, int self) {
    const T g0 = t.node(self).grad[0];
    const std::size_t n = t.node(id).value.size();
    std::vector<T> gmat(std::size_t(bins) * bins, T(0));
    for (int a = 0; a < bins; ++a)
      for (int b = 0; b < bins; ++b) {
        const T wv = joint[std::size_t(a) * bins + b];
        if (wv > T(0))
          gmat[std::size_t(a) * bins + b] =
              (std::log(total * wv / (row[a] * colsum[b])) - mi) / total;
      }
    std::vector<T> v(n * std::size_t(bins));
    if (t.node(id).requires_grad) {
      // v = fa * gmat, then dd_i = g0 * sum_b v[i][b] * db[i][b] * (b/(bins-1) - d_i) / s^2
      gemm<T>(int(n), bins, bins, fa.data(), bins, 1, gmat.data(), bins, 1, v.data(), bins, false);
      auto& dd = t.grad_buf(id);
      const auto& dv = t.node(id).value;
      for (std::size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (int b = 0; b < bins; ++b)
          acc += v[i * bins + b] * db[i * bins + b] * (T(b) / T(bins - 1) - dv[i]);
        dd[i] += g0 * acc * T(2) * inv2s2;
      }
    }
    if (t.node(ifx).requires_grad) {
      gemm<T>(int(n), bins, bins, db.data(), bins, 1, gmat.data(), 1, bins, v.data(), bins, false);
      auto& dfg = t.grad_buf(ifx);
      const auto& fv = t.node(ifx).value;
      for (std::size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (int a = 0; a < bins; ++a)
          acc += v[i * bins + a] * fa[i * bins + a] * (T(a) / T(bins - 1) - fv[i]);
        dfg[i] += g0 * acc * T(2) * inv2s2;
      }
    }
  };
  return tape.emit({1}, {mi}, {id, ifx}, std::move(bwd));
}

}  // namespace warpforge
