#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "warpforge/engine.hpp"
#include "warpforge/image.hpp"

namespace warpforge {

// det(I + grad u) via forward differences, evaluated where both differences
// exist: an (H-1) x (W-1) grid.
struct DetGrid {
  int height = 0;
  int width = 0;
  std::vector<double> det;

  double at(int y, int x) const { return det[std::size_t(y) * width + x]; }
};

DetGrid jacobian_determinants(const DisplacementField& u);

struct FoldReport {
  int64_t fold_count = 0;    // det <= 0, inclusive
  double fold_percent = 0;   // 100 * fold_count / (H*W of the field)
  double det_min = 0;
  double det_max = 0;
  double det_mean = 0;
};

FoldReport fold_report(const DisplacementField& u);

// SSIM at unit range plus MSE converted to the 0-255 intensity scale.
struct EvalMetrics {
  double ssim = 0;
  double mse_255 = 0;
};

EvalMetrics eval_metrics(const Image& deformed, const Image& fixed);

// Regular grid image deformed by phi (the warp operator applied to a
// synthetic line grid).
Image render_grid(const DisplacementField& u, int spacing);

struct SweepRecord {
  std::string param;  // "lambda", "sigma" or "alpha"
  double value = 0;
  uint64_t seed = 0;
  double ssim = 0;
  double mse_255 = 0;
  int64_t fold_count = 0;
  double fold_percent = 0;
  std::string status = "ok";  // error message for failed cells
};

struct SweepRequest {
  Image moving;
  Image fixed;
  RegistrationConfig base;
  std::string param = "lambda";
  std::vector<double> values;
  std::vector<uint64_t> seeds;
  int jobs = 1;
  // Invoked for each successful cell (from the worker thread that ran it)
  // with the resolved config and the full registration output.
  std::function<void(const SweepRecord&, const RegistrationConfig&, const RegistrationResult&)>
      on_cell;
};

// Runs register_pair per (value, seed) cell; failed cells carry their error
// in `status` and do not abort the sweep. Records come back sorted by
// (value, seed) regardless of job count.
std::vector<SweepRecord> run_sweep(const SweepRequest& request);

std::string sweep_csv(const std::vector<SweepRecord>& records);

}  // namespace warpforge
