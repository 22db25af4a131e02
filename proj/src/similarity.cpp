#include "warpforge/similarity.hpp"

namespace warpforge {

namespace {

// One definition, two uses: the evaluation metrics run the same graph
// builders on a throwaway double-precision tape.
template <typename BuildFn>
double eval_pair(const Image& d, const Image& f, BuildFn build) {
  Tape<double> tape;
  auto to_leaf = [&](const Image& img) {
    std::vector<double> v(img.values.begin(), img.values.end());
    return tape.leaf({img.height, img.width}, std::move(v), false);
  };
  return build(to_leaf(d), to_leaf(f)).scalar();
}

}  // namespace

double eval_mse(const Image& d, const Image& f) {
  return eval_pair(d, f, [](auto dt, auto ft) { return mse_value(dt, ft); });
}

double eval_pcc(const Image& d, const Image& f) {
  return eval_pair(d, f, [](auto dt, auto ft) { return pcc_value(dt, ft); });
}

double eval_local_cc(const Image& d, const Image& f, int window, double eps) {
  return eval_pair(d, f,
                   [&](auto dt, auto ft) { return local_cc_value(dt, ft, window, eps); });
}

double eval_mi(const Image& d, const Image& f, int bins, double sigma) {
  const double s = sigma > 0 ? sigma : 1.0 / double(bins - 1);
  return eval_pair(d, f, [&](auto dt, auto ft) { return mi_value(dt, ft, bins, s); });
}

double eval_ssim(const Image& d, const Image& f, int window, double c1, double c2) {
  return eval_pair(d, f, [&](auto dt, auto ft) { return ssim_value(dt, ft, window, c1, c2); });
}

SimilarityKind parse_similarity_kind(const std::string& name) {
  if (name == "mse") return SimilarityKind::mse;
  if (name == "pcc") return SimilarityKind::pcc;
  if (name == "cc") return SimilarityKind::local_cc;
  if (name == "mi") return SimilarityKind::mi;
  if (name == "ssim") return SimilarityKind::ssim;
  if (name == "ssim+pcc") return SimilarityKind::ssim_pcc;
  fail(ErrorCode::invalid_argument, "unknown similarity '" + name +
                                        "' (expected mse|pcc|cc|mi|ssim|ssim+pcc)");
}

const char* to_string(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::mse: return "mse";
    case SimilarityKind::pcc: return "pcc";
    case SimilarityKind::local_cc: return "cc";
    case SimilarityKind::mi: return "mi";
    case SimilarityKind::ssim: return "ssim";
    case SimilarityKind::ssim_pcc: return "ssim+pcc";
  }
  return "?";
}

}  // namespace warpforge
