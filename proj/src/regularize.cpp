#include "warpforge/regularize.hpp"

namespace warpforge {

namespace {

template <typename BuildFn>
double eval_field(const DisplacementField& u, BuildFn build) {
  Tape<double> tape;
  std::vector<double> v(u.data.begin(), u.data.end());
  auto leaf = tape.leaf({2, u.height, u.width}, std::move(v), false);
  return build(leaf).scalar();
}

}  // namespace

double eval_diffusion(const DisplacementField& u) {
  return eval_field(u, [](auto t) { return diffusion_penalty(t); });
}

double eval_tv(const DisplacementField& u) {
  return eval_field(u, [](auto t) { return tv_penalty(t); });
}

double eval_nonneg_jacobian(const DisplacementField& u) {
  return eval_field(u, [](auto t) { return nonneg_jacobian_penalty(t); });
}

DisplacementField smooth_field(const DisplacementField& u, double sigma) {
  Tape<float> tape;
  auto leaf = tape.leaf({2, u.height, u.width}, u.data, false);
  auto smoothed = gaussian_smooth_field(leaf, sigma);
  DisplacementField out(u.height, u.width);
  out.data = smoothed.value();
  return out;
}

RegularizerKind parse_regularizer_kind(const std::string& name) {
  if (name == "none") return RegularizerKind::none;
  if (name == "diffusion") return RegularizerKind::diffusion;
  if (name == "tv") return RegularizerKind::tv;
  if (name == "diffjac") return RegularizerKind::diffusion_jacobian;
  if (name == "gauss") return RegularizerKind::gaussian_smoothing;
  fail(ErrorCode::invalid_argument,
       "unknown regularizer '" + name + "' (expected none|diffusion|tv|diffjac|gauss)");
}

const char* to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::diffusion: return "diffusion";
    case RegularizerKind::tv: return "tv";
    case RegularizerKind::diffusion_jacobian: return "diffjac";
    case RegularizerKind::gaussian_smoothing: return "gauss";
  }
  return "?";
}

}  // namespace warpforge
