#include "warpforge/analyze.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "warpforge/similarity.hpp"

namespace warpforge {

DetGrid jacobian_determinants(const DisplacementField& u) {
  if (u.height < 2 || u.width < 2) fail_shape("jacobian_determinants: field must be at least 2x2");
  DetGrid grid;
  grid.height = u.height - 1;
  grid.width = u.width - 1;
  grid.det.resize(std::size_t(grid.height) * grid.width);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const double ux_x = double(u.ux(y, x + 1)) - u.ux(y, x);
      const double ux_y = double(u.ux(y + 1, x)) - u.ux(y, x);
      const double uy_x = double(u.uy(y, x + 1)) - u.uy(y, x);
      const double uy_y = double(u.uy(y + 1, x)) - u.uy(y, x);
      grid.det[std::size_t(y) * grid.width + x] = (1.0 + ux_x) * (1.0 + uy_y) - ux_y * uy_x;
    }
  }
  return grid;
}

FoldReport fold_report(const DisplacementField& u) {
  const DetGrid grid = jacobian_determinants(u);
  FoldReport report;
  report.det_min = grid.det.front();
  report.det_max = grid.det.front();
  double sum = 0;
  for (double d : grid.det) {
    if (d <= 0.0) ++report.fold_count;  // inclusive threshold
    report.det_min = std::min(report.det_min, d);
    report.det_max = std::max(report.det_max, d);
    sum += d;
  }
  report.det_mean = sum / double(grid.det.size());
  report.fold_percent = 100.0 * double(report.fold_count) / double(std::size_t(u.height) * u.width);
  return report;
}

EvalMetrics eval_metrics(const Image& deformed, const Image& fixed) {
  check_same_size(deformed, fixed, "eval_metrics");
  EvalMetrics metrics;
  metrics.ssim = eval_ssim(deformed, fixed);
  metrics.mse_255 = eval_mse(deformed, fixed) * 255.0 * 255.0;
  return metrics;
}

Image render_grid(const DisplacementField& u, int spacing) {
  if (spacing < 2) fail(ErrorCode::invalid_argument, "render_grid: spacing must be >= 2");
  Image grid(u.height, u.width, 0.0f);
  for (int y = 0; y < u.height; ++y)
    for (int x = 0; x < u.width; ++x)
      if (y % spacing == 0 || x % spacing == 0) grid.at(y, x) = 1.0f;
  return warp_bilinear(grid, u);
}

std::vector<SweepRecord> run_sweep(const SweepRequest& request) {
  if (request.values.empty() || request.seeds.empty())
    fail(ErrorCode::invalid_argument, "sweep: parameter grid and seed list must be non-empty");
  struct Cell {
    double value;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : request.values)
    for (uint64_t s : request.seeds) cells.push_back({v, s});
  std::vector<SweepRecord> records(cells.size());

  auto run_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    SweepRecord record;
    record.param = request.param;
    record.value = cell.value;
    record.seed = cell.seed;
    try {
      RegistrationConfig config = request.base;
      config.seed = cell.seed;
      if (request.param == "lambda") config.regularizer.lambda = cell.value;
      else if (request.param == "sigma") config.regularizer.sigma = cell.value;
      else if (request.param == "alpha") config.regularizer.alpha = cell.value;
      else fail(ErrorCode::invalid_argument, "sweep: unknown parameter '" + request.param + "'");
      auto output = register_pair(request.moving, request.fixed, nullptr, config);
      const auto metrics = eval_metrics(output.result.deformed, request.fixed);
      const auto folds = fold_report(output.result.field);
      record.ssim = metrics.ssim;
      record.mse_255 = metrics.mse_255;
      record.fold_count = folds.fold_count;
      record.fold_percent = folds.fold_percent;
      if (request.on_cell) request.on_cell(record, config, output.result);
    } catch (const std::exception& e) {
      record.status = e.what();
    }
    records[index] = std::move(record);
  };

  const int jobs = std::max(1, request.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int count = int(std::min(std::size_t(jobs), cells.size()));
    for (int t = 0; t < count; ++t)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) run_cell(i);
      });
    for (auto& w : workers) w.join();
  }

  std::sort(records.begin(), records.end(), [](const SweepRecord& a, const SweepRecord& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.seed < b.seed;
  });
  return records;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::ostringstream out;
  out << "param,value,seed,ssim,mse,fold_count,fold_percent,status\n";
  out.precision(9);
  for (const auto& r : records) {
    std::string status = r.status;
    for (auto& ch : status)
      if (ch == ',' || ch == '\n') ch = ';';
    out << r.param << ',' << r.value << ',' << r.seed << ',' << r.ssim << ',' << r.mse_255 << ','
        << r.fold_count << ',' << r.fold_percent << ',' << status << '\n';
  }
  return out.str();
}

}  // namespace warpforge
