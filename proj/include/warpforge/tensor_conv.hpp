#pragma once

#include <cstring>
#include <vector>

#include "warpforge/gemm.hpp"
#include "warpforge/tensor.hpp"

namespace warpforge {

namespace conv_detail {

// col is (Cin*k*k) x (Hout*Wout), row-major; row index (ci*k + ky)*k + kx.
template <typename T>
void im2col(const T* in, int cin, int h, int w, int k, int pad, int hout, int wout, T* col) {
  const std::size_t n = std::size_t(hout) * wout;
  for (int ci = 0; ci < cin; ++ci) {
    const T* plane = in + std::size_t(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (std::size_t(ci) * k * k + std::size_t(ky) * k + kx) * n;
        for (int y = 0; y < hout; ++y) {
          const int iy = y + ky - pad;
          T* row = dst + std::size_t(y) * wout;
          if (iy < 0 || iy >= h) {
            std::memset(row, 0, sizeof(T) * std::size_t(wout));
            continue;
          }
          int x0 = std::max(0, pad - kx);
          int x1 = std::min(wout, w + pad - kx);
          for (int x = 0; x < x0; ++x) row[x] = T(0);
          const T* src = plane + std::size_t(iy) * w + (x0 + kx - pad);
          for (int x = x0; x < x1; ++x) row[x] = src[x - x0];
          for (int x = x1; x < wout; ++x) row[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int k, int pad, int hout, int wout, T* in) {
  const std::size_t n = std::size_t(hout) * wout;
  for (int ci = 0; ci < cin; ++ci) {
    T* plane = in + std::size_t(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (std::size_t(ci) * k * k + std::size_t(ky) * k + kx) * n;
        for (int y = 0; y < hout; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          int x0 = std::max(0, pad - kx);
          int x1 = std::min(wout, w + pad - kx);
          T* dst = plane + std::size_t(iy) * w + (x0 + kx - pad);
          const T* s = src + std::size_t(y) * wout;
          for (int x = x0; x < x1; ++x) dst[x - x0] += s[x];
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& col_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace conv_detail

// 2D cross-correlation, stride 1, zero padding. input {Cin,H,W},
// weight {Cout,Cin,k,k}, bias {Cout} -> {Cout,H',W'}.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int padding) {
  auto& tape = op_detail::same_tape(input, weight);
  op_detail::same_tape(weight, bias);
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 3) fail_shape("conv2d: input must be CxHxW, got " + shape_str(xs));
  if (ws.size() != 4) fail_shape("conv2d: weight must be Cout x Cin x k x k, got " + shape_str(ws));
  const int cin = xs[0], h = xs[1], w = xs[2];
  const int cout = ws[0], k = ws[2];
  if (ws[1] != cin)
    fail_shape("conv2d: weight expects " + std::to_string(ws[1]) + " input channels, image has " +
               std::to_string(cin));
  if (ws[3] != k || k % 2 == 0) fail(ErrorCode::invalid_argument, "conv2d: kernel must be square and odd");
  if (bias.shape() != std::vector<int>{cout}) fail_shape("conv2d: bias must be {Cout}");
  if (padding < 0) fail(ErrorCode::invalid_argument, "conv2d: negative padding");
  const int hout = h + 2 * padding - k + 1;
  const int wout = w + 2 * padding - k + 1;
  if (hout < 1 || wout < 1) fail_shape("conv2d: kernel larger than padded input");

  const std::size_t n = std::size_t(hout) * wout;
  const int kk = cin * k * k;
  auto& col = conv_detail::col_scratch<T>();
  col.resize(std::size_t(kk) * n);
  conv_detail::im2col(input.value().data(), cin, h, w, k, padding, hout, wout, col.data());

  std::vector<T> out(std::size_t(cout) * n);
  gemm<T>(cout, int(n), kk, weight.value().data(), kk, 1, col.data(), int(n), 1, out.data(),
          int(n), false);
  const auto& bv = bias.value();
  for (int co = 0; co < cout; ++co) {
    T* row = out.data() + std::size_t(co) * n;
    for (std::size_t i = 0; i < n; ++i) row[i] += bv[co];
  }

  int ix = input.node(), iw = weight.node(), ib = bias.node();
  auto bwd = [ix, iw, ib, cin, h, w, k, padding, cout, hout, wout, kk](Tape<T>& t, int self) {
    const std::size_t n = std::size_t(hout) * wout;
    const auto& g = t.node(self).grad;
    if (t.node(ib).requires_grad) {
      auto& db = t.grad_buf(ib);
      for (int co = 0; co < cout; ++co) {
        T acc = T(0);
        const T* row = g.data() + std::size_t(co) * n;
        for (std::size_t i = 0; i < n; ++i) acc += row[i];
        db[co] += acc;
      }
    }
    const bool need_w = t.node(iw).requires_grad;
    const bool need_x = t.node(ix).requires_grad;
    if (!need_w && !need_x) return;
    auto& col = conv_detail::col_scratch<T>();
    col.resize(std::size_t(kk) * n);
    if (need_w) {
      conv_detail::im2col(t.node(ix).value.data(), cin, h, w, k, padding, hout, wout, col.data());
      // dW (Cout x K) += g (Cout x N) * col^T (N x K)
      gemm<T>(cout, kk, int(n), g.data(), int(n), 1, col.data(), 1, int(n),
              t.grad_buf(iw).data(), kk, true);
    }
    if (need_x) {
      // dcol (K x N) = W^T (K x Cout) * g (Cout x N), then scatter back.
      gemm<T>(kk, int(n), cout, t.node(iw).value.data(), 1, kk, g.data(), int(n), 1, col.data(),
              int(n), false);
      conv_detail::col2im_add(col.data(), cin, h, w, k, padding, hout, wout,
                              t.grad_buf(ix).data());
    }
  };
  return tape.emit({cout, hout, wout}, std::move(out), {ix, iw, ib}, std::move(bwd));
}

// 2x2 max pooling, stride 2. Gradient goes to the argmax; ties resolve to
// the first element in row-major order.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  const auto& xs = input.shape();
  if (xs.size() != 3) fail_shape("maxpool2x2: input must be CxHxW");
  const int c = xs[0], h = xs[1], w = xs[2];
  if (h % 2 != 0 || w % 2 != 0)
    fail_shape("maxpool2x2: H and W must be even, got " + shape_str(xs));
  const int ho = h / 2, wo = w / 2;
  std::vector<T> out(std::size_t(c) * ho * wo);
  std::vector<int> argmax(out.size());
  const auto& xv = input.value();
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        int best = (ci * h + 2 * y) * w + 2 * x;
        T bv = xv[best];
        const int cands[3] = {(ci * h + 2 * y) * w + 2 * x + 1, (ci * h + 2 * y + 1) * w + 2 * x,
                              (ci * h + 2 * y + 1) * w + 2 * x + 1};
        for (int idx : cands) {
          if (xv[idx] > bv) {
            bv = xv[idx];
            best = idx;
          }
        }
        out[(std::size_t(ci) * ho + y) * wo + x] = bv;
        argmax[(std::size_t(ci) * ho + y) * wo + x] = best;
      }
    }
  }
  int ix = input.node();
  return input.tape()->emit({c, ho, wo}, std::move(out), {ix},
                            [ix, argmax = std::move(argmax)](Tape<T>& t, int self) {
                              if (!t.node(ix).requires_grad) return;
                              const auto& g = t.node(self).grad;
                              auto& dx = t.grad_buf(ix);
                              for (std::size_t i = 0; i < g.size(); ++i) dx[argmax[i]] += g[i];
                            });
}

// Transposed convolution with a 2x2 kernel and stride 2: the exact adjoint
// of a stride-2 2x2 convolution. input {Cin,H,W}, weight {Cin,Cout,2,2},
// bias {Cout} -> {Cout,2H,2W}.
template <typename T>
Tensor<T> upconv2x2(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  auto& tape = op_detail::same_tape(input, weight);
  op_detail::same_tape(weight, bias);
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 3) fail_shape("upconv2x2: input must be CxHxW");
  if (ws.size() != 4 || ws[2] != 2 || ws[3] != 2)
    fail_shape("upconv2x2: weight must be Cin x Cout x 2 x 2, got " + shape_str(ws));
  const int cin = xs[0], h = xs[1], w = xs[2];
  const int cout = ws[1];
  if (ws[0] != cin) fail_shape("upconv2x2: weight Cin mismatch");
  if (bias.shape() != std::vector<int>{cout}) fail_shape("upconv2x2: bias must be {Cout}");
  const int ho = 2 * h, wo = 2 * w;
  const std::size_t hw = std::size_t(h) * w;

  std::vector<T> out(std::size_t(cout) * ho * wo);
  std::vector<T> tap(std::size_t(cout) * hw);
  const T* wv = weight.value().data();
  const auto& bv = bias.value();
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      // tap (Cout x HW) = W_tap^T (Cout x Cin) * in (Cin x HW)
      const T* a = wv + std::size_t(dy) * 2 + dx;  // element (ci,co) at ((ci*Cout+co)*2+dy)*2+dx
      gemm<T>(cout, int(hw), cin, a, 4, std::ptrdiff_t(cout) * 4, input.value().data(),
              std::ptrdiff_t(hw), 1, tap.data(), std::ptrdiff_t(hw), false);
      for (int co = 0; co < cout; ++co) {
        const T* src = tap.data() + std::size_t(co) * hw;
        T* plane = out.data() + std::size_t(co) * ho * wo;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            plane[std::size_t(2 * y + dy) * wo + 2 * x + dx] = src[std::size_t(y) * w + x] + bv[co];
      }
    }
  }

  int ix = input.node(), iw = weight.node(), ib = bias.node();
  auto bwd = [ix, iw, ib, cin, h, w, cout, ho, wo](Tape<T>& t, int self) {
    const std::size_t hw = std::size_t(h) * w;
    const auto& g = t.node(self).grad;
    if (t.node(ib).requires_grad) {
      auto& db = t.grad_buf(ib);
      for (int co = 0; co < cout; ++co) {
        T acc = T(0);
        const T* plane = g.data() + std::size_t(co) * ho * wo;
        for (std::size_t i = 0; i < std::size_t(ho) * wo; ++i) acc += plane[i];
        db[co] += acc;
      }
    }
    const bool need_x = t.node(ix).requires_grad;
    const bool need_w = t.node(iw).requires_grad;
    if (!need_x && !need_w) return;
    std::vector<T> gsub(std::size_t(cout) * hw);
    std::vector<T> dwtap(std::size_t(cin) * cout);
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        for (int co = 0; co < cout; ++co) {
          const T* plane = g.data() + std::size_t(co) * ho * wo;
          T* dst = gsub.data() + std::size_t(co) * hw;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              dst[std::size_t(y) * w + x] = plane[std::size_t(2 * y + dy) * wo + 2 * x + dx];
        }
        if (need_x) {
          // dIn (Cin x HW) += W_tap (Cin x Cout) * gsub (Cout x HW)
          const T* a = t.node(iw).value.data() + std::size_t(dy) * 2 + dx;
          gemm<T>(cin, int(hw), cout, a, std::ptrdiff_t(cout) * 4, 4, gsub.data(),
                  std::ptrdiff_t(hw), 1, t.grad_buf(ix).data(), std::ptrdiff_t(hw), true);
        }
        if (need_w) {
          // dW_tap (Cin x Cout) = in (Cin x HW) * gsub^T (HW x Cout)
          gemm<T>(cin, cout, int(hw), t.node(ix).value.data(), std::ptrdiff_t(hw), 1, gsub.data(),
                  1, std::ptrdiff_t(hw), dwtap.data(), cout, false);
          auto& dw = t.grad_buf(iw);
          for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co)
              dw[((std::size_t(ci) * cout + co) * 2 + dy) * 2 + dx] +=
                  dwtap[std::size_t(ci) * cout + co];
        }
      }
    }
  };
  return tape.emit({cout, ho, wo}, std::move(out), {ix, iw, ib}, std::move(bwd));
}

// Stacks two CxHxW tensors along the channel axis. Either side may have
// zero channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = op_detail::same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3) fail_shape("concat_channels: inputs must be CxHxW");
  if (as[1] != bs[1] || as[2] != bs[2])
    fail_shape("concat_channels: spatial mismatch " + shape_str(as) + " vs " + shape_str(bs));
  std::vector<T> out;
  out.reserve(a.value().size() + b.value().size());
  out.insert(out.end(), a.value().begin(), a.value().end());
  out.insert(out.end(), b.value().begin(), b.value().end());
  int ia = a.node(), ib = b.node();
  const std::size_t na = a.value().size();
  return tape.emit({as[0] + bs[0], as[1], as[2]}, std::move(out), {ia, ib},
                   [ia, ib, na](Tape<T>& t, int self) {
                     const auto& g = t.node(self).grad;
                     if (t.node(ia).requires_grad) {
                       auto& da = t.grad_buf(ia);
                       for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
                     }
                     if (t.node(ib).requires_grad) {
                       auto& db = t.grad_buf(ib);
                       for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[na + i];
                     }
                   });
}

// Extracts channel c of a CxHxW tensor as an HxW tensor.
template <typename T>
Tensor<T> select_channel(const Tensor<T>& a, int c) {
  const auto& as = a.shape();
  if (as.size() != 3) fail_shape("select_channel: input must be CxHxW");
  if (c < 0 || c >= as[0]) fail(ErrorCode::invalid_argument, "select_channel: channel out of range");
  const std::size_t hw = std::size_t(as[1]) * as[2];
  std::vector<T> out(a.value().begin() + std::size_t(c) * hw,
                     a.value().begin() + std::size_t(c + 1) * hw);
  int ia = a.node();
  return a.tape()->emit({as[1], as[2]}, std::move(out), {ia}, [ia, c, hw](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < hw; ++i) da[std::size_t(c) * hw + i] += g[i];
  });
}

// Crops an HxW tensor to the window [top, top+h) x [left, left+w).
template <typename T>
Tensor<T> crop2d(const Tensor<T>& a, int top, int left, int h, int w) {
  const auto& as = a.shape();
  if (as.size() != 2) fail_shape("crop2d: input must be HxW");
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > as[0] || left + w > as[1])
    fail(ErrorCode::invalid_argument, "crop2d: window out of bounds");
  const int src_w = as[1];
  std::vector<T> out(std::size_t(h) * w);
  const auto& av = a.value();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[std::size_t(y) * w + x] = av[std::size_t(top + y) * src_w + left + x];
  int ia = a.node();
  return a.tape()->emit({h, w}, std::move(out), {ia}, [ia, top, left, h, w, src_w](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& da = t.grad_buf(ia);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        da[std::size_t(top + y) * src_w + left + x] += g[std::size_t(y) * w + x];
  });
}

}  // namespace warpforge
