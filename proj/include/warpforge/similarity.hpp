#pragma once

#include <string>

#include "warpforge/image.hpp"
#include "warpforge/tensor.hpp"
#include "warpforge/tensor_image.hpp"

namespace warpforge {

enum class SimilarityKind { mse, pcc, local_cc, mi, ssim, ssim_pcc };

// Per-kind parameters. Every kind maps to a loss where lower is better.
struct SimilaritySpec {
  SimilarityKind kind = SimilarityKind::ssim_pcc;
  int ssim_window = 7;
  double ssim_c1 = 1e-4;   // (0.01)^2 at unit dynamic range
  double ssim_c2 = 9e-4;   // (0.03)^2
  int lcc_window = 3;
  double lcc_eps = 1e-5;
  int mi_bins = 32;
  double mi_sigma = 0.0;   // <= 0 selects the anchor spacing 1/(bins-1)
};

inline double mi_sigma_or_default(const SimilaritySpec& spec) {
  return spec.mi_sigma > 0 ? spec.mi_sigma : 1.0 / double(spec.mi_bins - 1);
}

namespace sim_detail {

template <typename T>
void check_images(const Tensor<T>& d, const Tensor<T>& f, const char* op) {
  if (d.shape().size() != 2) fail_shape(std::string(op) + ": inputs must be HxW");
  op_detail::check_same_shape(d, f, op);
}

template <typename T>
T variance(const Tensor<T>& x) {
  const auto& v = x.value();
  T m = T(0);
  for (T e : v) m += e;
  m /= T(v.size());
  T acc = T(0);
  for (T e : v) acc += (e - m) * (e - m);
  return acc / T(v.size());
}

template <typename T>
Tensor<T> centered(const Tensor<T>& x) {
  return sub(x, broadcast_scalar(mean(x), x.shape()));
}

}  // namespace sim_detail

// Mean squared error over the full domain. Loss = MSE.
template <typename T>
Tensor<T> mse_value(const Tensor<T>& d, const Tensor<T>& f) {
  sim_detail::check_images(d, f, "mse");
  return mean(square(sub(f, d)));
}

// Pearson correlation coefficient over all pixels, in [-1,1]. Loss = 1 - PCC.
// Requires both images non-constant.
template <typename T>
Tensor<T> pcc_value(const Tensor<T>& d, const Tensor<T>& f) {
  sim_detail::check_images(d, f, "pcc");
  if (!(sim_detail::variance(d) > T(0)) || !(sim_detail::variance(f) > T(0)))
    fail(ErrorCode::invalid_argument, "pcc: constant image has undefined correlation");
  auto dc = sim_detail::centered(d);
  auto fc = sim_detail::centered(f);
  auto num = sum(mul(fc, dc));
  auto den = mul(sqrt(sum(square(fc))), sqrt(sum(square(dc))));
  return div(num, den);
}

// Local (windowed) squared cross-correlation summed over all valid window
// positions. Each window contributes (sum (f-fbar)(d-dbar))^2 over
// (sum (f-fbar)^2 * sum (d-dbar)^2 + eps). Loss = -CC.
template <typename T>
Tensor<T> local_cc_value(const Tensor<T>& d, const Tensor<T>& f, int window, double eps) {
  sim_detail::check_images(d, f, "local_cc");
  if (window % 2 == 0 || window < 1) fail(ErrorCode::invalid_argument, "local_cc: window must be odd");
  const T n = T(window) * T(window);
  auto sd = window_sum(d, window);
  auto sf = window_sum(f, window);
  auto sdd = window_sum(square(d), window);
  auto sff = window_sum(square(f), window);
  auto sfd = window_sum(mul(f, d), window);
  // sum (f-fbar)(d-dbar) = sfd - sf*sd/n, and likewise for the variances
  auto cross = sub(sfd, mul_scalar(mul(sf, sd), T(1) / n));
  auto var_f = sub(sff, mul_scalar(square(sf), T(1) / n));
  auto var_d = sub(sdd, mul_scalar(square(sd), T(1) / n));
  auto num = square(cross);
  auto den = add_scalar(mul(var_f, var_d), T(eps));
  return sum(div(num, den));
}

// Parzen-window mutual information (nats). Loss = -MI.
template <typename T>
Tensor<T> mi_value(const Tensor<T>& d, const Tensor<T>& f, int bins, double sigma) {
  sim_detail::check_images(d, f, "mi");
  return parzen_mi(d, f, bins, sigma);
}

// Mean SSIM over all valid window positions with uniform window statistics.
// Loss = 1 - SSIM.
template <typename T>
Tensor<T> ssim_value(const Tensor<T>& d, const Tensor<T>& f, int window, double c1, double c2) {
  sim_detail::check_images(d, f, "ssim");
  const auto& s = d.shape();
  if (window % 2 == 0 || window < 1 || window > s[0] || window > s[1])
    fail(ErrorCode::invalid_argument, "ssim: window must be odd and <= min(H,W)");
  const T inv_n = T(1) / (T(window) * T(window));
  auto mu_d = mul_scalar(window_sum(d, window), inv_n);
  auto mu_f = mul_scalar(window_sum(f, window), inv_n);
  auto var_d = sub(mul_scalar(window_sum(square(d), window), inv_n), square(mu_d));
  auto var_f = sub(mul_scalar(window_sum(square(f), window), inv_n), square(mu_f));
  auto cov = sub(mul_scalar(window_sum(mul(d, f), window), inv_n), mul(mu_d, mu_f));
  auto num = mul(add_scalar(mul_scalar(mul(mu_d, mu_f), T(2)), T(c1)),
                 add_scalar(mul_scalar(cov, T(2)), T(c2)));
  auto den = mul(add_scalar(add(square(mu_d), square(mu_f)), T(c1)),
                 add_scalar(add(var_d, var_f), T(c2)));
  return mean(div(num, den));
}

// 0.5*(1-SSIM) + 0.5*(1-PCC), both terms at equal weight. Returns the loss
// itself rather than a similarity value.
template <typename T>
Tensor<T> ssim_pcc_loss(const Tensor<T>& d, const Tensor<T>& f, const SimilaritySpec& spec) {
  auto s = ssim_value(d, f, spec.ssim_window, spec.ssim_c1, spec.ssim_c2);
  auto p = pcc_value(d, f);
  auto one_minus = [](Tensor<T> v) { return add_scalar(mul_scalar(v, T(-1)), T(1)); };
  return add(mul_scalar(one_minus(s), T(0.5)), mul_scalar(one_minus(p), T(0.5)));
}

// Loss for any kind; lower is better for all of them.
template <typename T>
Tensor<T> similarity_loss(const Tensor<T>& d, const Tensor<T>& f, const SimilaritySpec& spec) {
  switch (spec.kind) {
    case SimilarityKind::mse:
      return mse_value(d, f);
    case SimilarityKind::pcc:
      return add_scalar(mul_scalar(pcc_value(d, f), T(-1)), T(1));
    case SimilarityKind::local_cc:
      return mul_scalar(local_cc_value(d, f, spec.lcc_window, spec.lcc_eps), T(-1));
    case SimilarityKind::mi:
      return mul_scalar(mi_value(d, f, spec.mi_bins, mi_sigma_or_default(spec)), T(-1));
    case SimilarityKind::ssim:
      return add_scalar(mul_scalar(ssim_value(d, f, spec.ssim_window, spec.ssim_c1, spec.ssim_c2), T(-1)), T(1));
    case SimilarityKind::ssim_pcc:
      return ssim_pcc_loss(d, f, spec);
  }
  fail(ErrorCode::invalid_argument, "unknown similarity kind");
}

// ---- evaluation-metric variants (same definitions, run off-tape in double) ----

double eval_mse(const Image& d, const Image& f);
double eval_pcc(const Image& d, const Image& f);
double eval_local_cc(const Image& d, const Image& f, int window = 3, double eps = 1e-5);
double eval_mi(const Image& d, const Image& f, int bins = 32, double sigma = 0.0);
double eval_ssim(const Image& d, const Image& f, int window = 7, double c1 = 1e-4, double c2 = 9e-4);

SimilarityKind parse_similarity_kind(const std::string& name);
const char* to_string(SimilarityKind kind);

}  // namespace warpforge
