#pragma once

#include <string>

#include "warpforge/image.hpp"
#include "warpforge/tensor.hpp"
#include "warpforge/tensor_conv.hpp"
#include "warpforge/tensor_image.hpp"

namespace warpforge {

enum class RegularizerKind { none, diffusion, tv, diffusion_jacobian, gaussian_smoothing };

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::none;
  double lambda = 0.0;  // penalty weight; >= 0
  double alpha = 1.0;   // Jacobian term weight inside diffusion_jacobian; >= 0
  double sigma = 1.0;   // gaussian_smoothing width; > 0
};

inline void validate(const RegularizerSpec& spec) {
  if (spec.lambda < 0) fail(ErrorCode::invalid_argument, "regularizer: lambda must be >= 0");
  if (spec.alpha < 0) fail(ErrorCode::invalid_argument, "regularizer: alpha must be >= 0");
  if (spec.kind == RegularizerKind::gaussian_smoothing && !(spec.sigma > 0))
    fail(ErrorCode::invalid_argument, "regularizer: sigma must be > 0");
}

namespace reg_detail {

template <typename T>
void check_field(const Tensor<T>& u, const char* op) {
  const auto& s = u.shape();
  if (s.size() != 3 || s[0] != 2)
    fail_shape(std::string(op) + ": field must be 2xHxW, got " + shape_str(s));
}

}  // namespace reg_detail

// sum_i ||grad u(i)||^2, forward differences, trailing row/column omitted.
template <typename T>
Tensor<T> diffusion_penalty(const Tensor<T>& u) {
  reg_detail::check_field(u, "diffusion");
  return add(sum(square(forward_diff_x(u))), sum(square(forward_diff_y(u))));
}

// sum_i ||grad u(i)||_1 with the same forward-difference stencil.
template <typename T>
Tensor<T> tv_penalty(const Tensor<T>& u) {
  reg_detail::check_field(u, "tv");
  return add(sum(abs(forward_diff_x(u))), sum(abs(forward_diff_y(u))));
}

// Per-pixel det(I + grad u) over the sites where both forward differences
// exist, i.e. the (H-1)x(W-1) top-left subgrid.
template <typename T>
Tensor<T> jacobian_determinant_grid(const Tensor<T>& u) {
  reg_detail::check_field(u, "jacobian");
  const int h = u.shape()[1], w = u.shape()[2];
  if (h < 2 || w < 2) fail_shape("jacobian: field must be at least 2x2");
  auto dx = forward_diff_x(u);
  auto dy = forward_diff_y(u);
  auto ux_x = crop2d(select_channel(dx, 0), 0, 0, h - 1, w - 1);
  auto ux_y = crop2d(select_channel(dy, 0), 0, 0, h - 1, w - 1);
  auto uy_x = crop2d(select_channel(dx, 1), 0, 0, h - 1, w - 1);
  auto uy_y = crop2d(select_channel(dy, 1), 0, 0, h - 1, w - 1);
  return sub(mul(add_scalar(ux_x, T(1)), add_scalar(uy_y, T(1))), mul(ux_y, uy_x));
}

// sum_i (|det J| - det J): zero wherever det >= 0, 2|det| where det < 0.
template <typename T>
Tensor<T> nonneg_jacobian_penalty(const Tensor<T>& u) {
  auto det = jacobian_determinant_grid(u);
  return sub(sum(abs(det)), sum(det));
}

// diffusion + alpha * jacobian penalty.
template <typename T>
Tensor<T> combined_diffusion_jacobian(const Tensor<T>& u, double alpha) {
  if (alpha < 0) fail(ErrorCode::invalid_argument, "combined regularizer: alpha must be >= 0");
  return add(diffusion_penalty(u), mul_scalar(nonneg_jacobian_penalty(u), T(alpha)));
}

// Convolves each displacement channel with a normalized truncated Gaussian,
// reflective border; stays inside the differentiable graph.
template <typename T>
Tensor<T> gaussian_smooth_field(const Tensor<T>& u, double sigma) {
  reg_detail::check_field(u, "gaussian_smooth_field");
  return gaussian_blur(u, sigma);
}

template <typename T>
Tensor<T> regularizer_penalty(const Tensor<T>& u, const RegularizerSpec& spec) {
  switch (spec.kind) {
    case RegularizerKind::diffusion:
      return diffusion_penalty(u);
    case RegularizerKind::tv:
      return tv_penalty(u);
    case RegularizerKind::diffusion_jacobian:
      return combined_diffusion_jacobian(u, spec.alpha);
    default:
      fail(ErrorCode::invalid_argument, "regularizer kind has no penalty term");
  }
}

// Off-tape conveniences for analysis and tests (double precision).
double eval_diffusion(const DisplacementField& u);
double eval_tv(const DisplacementField& u);
double eval_nonneg_jacobian(const DisplacementField& u);
DisplacementField smooth_field(const DisplacementField& u, double sigma);

RegularizerKind parse_regularizer_kind(const std::string& name);
const char* to_string(RegularizerKind kind);

}  // namespace warpforge
