// warpforge: per-pair deformable registration of 2D images with a small
// convolutional generator optimized from scratch for every pair.
//
// Subcommands: register, make-phantom, analyze, sweep. See README.md.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "warpforge/analyze.hpp"
#include "warpforge/engine.hpp"
#include "warpforge/io.hpp"
#include "warpforge/phantom.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace warpforge;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json input_digest(const std::string& path) {
  return json{{"path", path}, {"crc32", file_crc32(path)}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::io, "short write to '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

int thread_cap() {
  if (const char* env = std::getenv("WARPFORGE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct RegisterFlags {
  std::string moving, fixed, labels, out;
  std::string loss = "ssim+pcc";
  std::string reg = "none";
  double lambda = 1.0;
  double alpha = 1.0;
  double sigma = 1.0;
  int iters = 0;  // 0 = by image size
  double lr = 1e-3;
  uint64_t seed = 0;
  double prefilter_sigma = 0.0;
  std::string precision = "f32";
  int grid_spacing = 8;
};

RegistrationConfig build_config(const RegisterFlags& flags, int image_size) {
  RegistrationConfig config;
  config.iterations = flags.iters > 0 ? flags.iters : default_iterations(image_size);
  config.similarity.kind = parse_similarity_kind(flags.loss);
  config.regularizer.kind = parse_regularizer_kind(flags.reg);
  config.regularizer.lambda =
      (config.regularizer.kind == RegularizerKind::none ||
       config.regularizer.kind == RegularizerKind::gaussian_smoothing)
          ? 0.0
          : flags.lambda;
  config.regularizer.alpha = flags.alpha;
  config.regularizer.sigma = flags.sigma;
  config.learning_rate = flags.lr;
  config.seed = flags.seed;
  config.prefilter_sigma = flags.prefilter_sigma;
  config.precision = flags.precision == "f64" ? Precision::f64 : Precision::f32;
  return config;
}

json config_json(const RegistrationConfig& config) {
  return json{
      {"iterations", config.iterations},
      {"loss", to_string(config.similarity.kind)},
      {"reg", to_string(config.regularizer.kind)},
      {"lambda", config.regularizer.lambda},
      {"alpha", config.regularizer.alpha},
      {"sigma", config.regularizer.sigma},
      {"learning_rate", config.learning_rate},
      {"optimizer", config.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
      {"beta1", config.optimizer.beta1},
      {"beta2", config.optimizer.beta2},
      {"epsilon", config.optimizer.epsilon},
      {"seed", config.seed},
      {"prefilter_sigma", config.prefilter_sigma},
      {"precision", config.precision == Precision::f64 ? "f64" : "f32"},
      {"unet",
       {{"encoder_channels", config.unet.encoder_channels},
        {"decoder_channels", config.unet.decoder_channels},
        {"head_channels", config.unet.head_channels},
        {"depth", config.unet.depth}}},
  };
}

json manifest_base(const std::string& command, uint64_t seed) {
  return json{{"tool", "warpforge"},
              {"version", kVersion},
              {"command", command},
              {"created_utc", timestamp_utc()},
              {"seed", seed}};
}

json metrics_json(const RegistrationResult& result, const Image& fixed, uint64_t seed) {
  const auto metrics = eval_metrics(result.deformed, fixed);
  const auto folds = fold_report(result.field);
  return json{{"ssim", metrics.ssim},
              {"mse_255", metrics.mse_255},
              {"fold_count", folds.fold_count},
              {"fold_percent", folds.fold_percent},
              {"iterations", result.iterations_run},
              {"final_loss", result.loss_trace.back().total},
              {"seed", seed}};
}

std::string loss_trace_csv(const RegistrationResult& result) {
  std::ostringstream out;
  out.precision(9);
  out << "iter,total,similarity,regularizer\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    const auto& s = result.loss_trace[i];
    out << i << ',' << s.total << ',' << s.similarity << ',' << s.regularizer << '\n';
  }
  return out.str();
}

// Diverging colormap for Jacobian determinants: folded (det <= 0) in red,
// identity (det = 1) white, expansion toward blue.
void write_jacobian_png(const DetGrid& grid, const fs::path& path) {
  std::vector<uint8_t> rgb(std::size_t(grid.width) * grid.height * 3);
  double dmax = 1.0;
  for (double d : grid.det) dmax = std::max(dmax, d);
  for (std::size_t i = 0; i < grid.det.size(); ++i) {
    const double d = grid.det[i];
    double r = 1, g = 1, b = 1;
    if (d <= 0.0) {
      r = 1;
      g = b = std::max(0.0, 1.0 + d / 2.0) * 0.2;
    } else if (d < 1.0) {
      r = 1;
      g = b = d;  // contraction fades toward red
    } else {
      const double t = dmax > 1.0 ? (d - 1.0) / (dmax - 1.0) : 0.0;
      r = g = 1.0 - t;
      b = 1;
    }
    rgb[3 * i] = uint8_t(std::lround(std::clamp(r, 0.0, 1.0) * 255));
    rgb[3 * i + 1] = uint8_t(std::lround(std::clamp(g, 0.0, 1.0) * 255));
    rgb[3 * i + 2] = uint8_t(std::lround(std::clamp(b, 0.0, 1.0) * 255));
  }
  png::write_rgb8(grid.width, grid.height, rgb, path.string());
}

json fold_json(const FoldReport& report) {
  return json{{"fold_count", report.fold_count},
              {"fold_percent", report.fold_percent},
              {"det_min", report.det_min},
              {"det_max", report.det_max},
              {"det_mean", report.det_mean}};
}

void write_run_outputs(const fs::path& out_dir, const RegistrationResult& result,
                       const std::optional<LabelMap>& warped_labels, const Image& fixed,
                       const RegistrationConfig& config, int grid_spacing, const json& inputs) {
  fs::create_directories(out_dir);
  write_image(result.deformed, (out_dir / "warped.png").string());
  write_field(result.field, (out_dir / "field.dfld").string());
  if (warped_labels) write_labels(*warped_labels, (out_dir / "warped_labels.png").string());
  write_image(render_grid(result.field, grid_spacing), (out_dir / "grid.png").string());
  write_json(out_dir / "metrics.json", metrics_json(result, fixed, config.seed));
  write_text(out_dir / "loss_trace.csv", loss_trace_csv(result));

  json manifest = manifest_base("register", config.seed);
  manifest["config"] = config_json(config);
  manifest["grid_spacing"] = grid_spacing;
  manifest["inputs"] = inputs;
  manifest["wall_time_seconds"] = result.wall_time_seconds;
  write_json(out_dir / "manifest.json", manifest);
}

int cmd_register(const RegisterFlags& flags) {
  const Image moving = read_image(flags.moving);
  const Image fixed = read_image(flags.fixed);
  std::optional<LabelMap> labels;
  if (!flags.labels.empty()) labels = read_labels(flags.labels);

  const RegistrationConfig config = build_config(flags, moving.width);
  const auto output = register_pair(moving, fixed, labels ? &*labels : nullptr, config);

  json inputs = json::object();
  inputs["moving"] = input_digest(flags.moving);
  inputs["fixed"] = input_digest(flags.fixed);
  if (!flags.labels.empty()) inputs["labels"] = input_digest(flags.labels);
  write_run_outputs(flags.out, output.result, output.warped_labels, fixed, config,
                    flags.grid_spacing, inputs);

  std::cout << "registered " << flags.moving << " -> " << flags.fixed << " ("
            << output.result.iterations_run << " iterations, final loss "
            << output.result.loss_trace.back().total << ")\n";
  return 0;
}

int cmd_make_phantom(const std::string& kind, int size, double noise, double blur,
                     const std::string& out) {
  PhantomSpec spec;
  spec.kind = parse_phantom_kind(kind);
  spec.size = size;
  spec.noise_sigma = noise;
  spec.blur_sigma = blur;
  const Phantom phantom = make_phantom(spec);
  fs::create_directories(out);
  const fs::path out_dir(out);
  write_image(phantom.image, (out_dir / "phantom.png").string());
  write_labels(phantom.labels, (out_dir / "labels.png").string());
  json manifest = manifest_base("make-phantom", 0);
  manifest["spec"] = json{{"kind", to_string(spec.kind)},
                          {"size", spec.size},
                          {"noise_sigma", spec.noise_sigma},
                          {"blur_sigma", spec.blur_sigma},
                          {"ellipses", phantom_ellipse_count(spec.kind)}};
  write_json(out_dir / "spec.json", manifest);
  std::cout << "wrote " << to_string(spec.kind) << " phantom (" << size << "x" << size << ") to "
            << out << "\n";
  return 0;
}

int cmd_analyze(const std::string& field_path, const std::string& moving_path,
                const std::string& fixed_path, const std::string& out) {
  const DisplacementField field = read_field(field_path);
  fs::create_directories(out);
  const fs::path out_dir(out);
  const auto report = fold_report(field);
  write_json(out_dir / "fold_report.json", fold_json(report));
  write_jacobian_png(jacobian_determinants(field), out_dir / "jacobian.png");
  json manifest = manifest_base("analyze", 0);
  manifest["inputs"] = json{{"field", input_digest(field_path)}};
  if (!moving_path.empty() && !fixed_path.empty()) {
    const Image moving = read_image(moving_path);
    const Image fixed = read_image(fixed_path);
    const Image deformed = warp_bilinear(moving, field);
    const auto metrics = eval_metrics(deformed, fixed);
    write_json(out_dir / "metrics.json",
               json{{"ssim", metrics.ssim},
                    {"mse_255", metrics.mse_255},
                    {"fold_count", report.fold_count},
                    {"fold_percent", report.fold_percent}});
    manifest["inputs"]["moving"] = input_digest(moving_path);
    manifest["inputs"]["fixed"] = input_digest(fixed_path);
  }
  write_json(out_dir / "manifest.json", manifest);
  std::cout << "fold_count " << report.fold_count << " (" << report.fold_percent << "%)\n";
  return 0;
}

struct SweepFlags {
  RegisterFlags reg;
  std::string param;  // empty = by regularizer kind
  std::vector<double> grid;
  std::vector<uint64_t> seeds;
  int jobs = 1;
};

int cmd_sweep(const SweepFlags& flags) {
  const Image moving = read_image(flags.reg.moving);
  const Image fixed = read_image(flags.reg.fixed);

  SweepRequest request;
  request.moving = moving;
  request.fixed = fixed;
  request.base = build_config(flags.reg, moving.width);
  // Penalty kinds need a nonzero weight for the swept lambda to matter.
  if (request.base.regularizer.kind != RegularizerKind::none &&
      request.base.regularizer.kind != RegularizerKind::gaussian_smoothing)
    request.base.regularizer.lambda = flags.reg.lambda;
  request.param = !flags.param.empty() ? flags.param
                  : request.base.regularizer.kind == RegularizerKind::gaussian_smoothing
                      ? "sigma"
                      : "lambda";
  request.values = flags.grid;
  request.seeds = flags.seeds;
  request.jobs = std::min(flags.jobs, thread_cap());

  fs::create_directories(flags.reg.out);
  const fs::path out_dir(flags.reg.out);

  json inputs = json::object();
  inputs["moving"] = input_digest(flags.reg.moving);
  inputs["fixed"] = input_digest(flags.reg.fixed);
  const Image& fixed_ref = fixed;
  const int grid_spacing = flags.reg.grid_spacing;
  request.on_cell = [&](const SweepRecord& record, const RegistrationConfig& config,
                        const RegistrationResult& result) {
    std::ostringstream name;
    name << record.param << "_" << record.value << "_seed" << record.seed;
    write_run_outputs(out_dir / name.str(), result, std::nullopt, fixed_ref, config, grid_spacing,
                      inputs);
  };
  const auto records = run_sweep(request);
  write_text(out_dir / "sweep.csv", sweep_csv(records));

  json manifest = manifest_base("sweep", 0);
  manifest["config"] = config_json(request.base);
  manifest["param"] = request.param;
  manifest["values"] = request.values;
  manifest["seeds"] = request.seeds;
  manifest["jobs"] = request.jobs;
  manifest["inputs"] = inputs;
  write_json(out_dir / "manifest.json", manifest);
  std::cout << "sweep wrote " << records.size() << " cells to " << flags.reg.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warpforge: per-pair deformable 2D image registration"};
  app.set_version_flag("--version", std::string("warpforge ") + kVersion);
  app.require_subcommand(1);

  RegisterFlags reg;
  auto* reg_cmd = app.add_subcommand("register", "register a moving image onto a fixed image");
  reg_cmd->add_option("--moving", reg.moving, "moving image (.png/.pgm/.f32)")->required();
  reg_cmd->add_option("--fixed", reg.fixed, "fixed image")->required();
  reg_cmd->add_option("--labels", reg.labels, "label map to carry through the warp");
  reg_cmd->add_option("--loss", reg.loss, "mse|pcc|cc|mi|ssim|ssim+pcc (default ssim+pcc)");
  reg_cmd->add_option("--reg", reg.reg, "none|diffusion|tv|diffjac|gauss (default none)");
  reg_cmd->add_option("--lambda", reg.lambda, "regularizer weight (default 1)");
  reg_cmd->add_option("--alpha", reg.alpha, "Jacobian term weight for diffjac (default 1)");
  reg_cmd->add_option("--sigma", reg.sigma, "field smoothing sigma for gauss (default 1)");
  reg_cmd->add_option("--iters", reg.iters, "iterations (default 300 for <=128px, else 1500)");
  reg_cmd->add_option("--lr", reg.lr, "learning rate (default 1e-3)");
  reg_cmd->add_option("--seed", reg.seed, "seed for network initialization");
  reg_cmd->add_option("--prefilter-sigma", reg.prefilter_sigma,
                      "Gaussian pre-filter for the fixed image");
  reg_cmd->add_option("--precision", reg.precision, "f32|f64 (default f32)");
  reg_cmd->add_option("--grid-spacing", reg.grid_spacing, "spacing for grid.png (default 8)");
  reg_cmd->add_option("--out", reg.out, "output directory")->required();

  std::string ph_kind;
  int ph_size = 128;
  double ph_noise = 0, ph_blur = 0;
  std::string ph_out;
  auto* ph_cmd = app.add_subcommand("make-phantom", "generate a synthetic phantom + labels");
  ph_cmd->add_option("--kind", ph_kind, "shepp|body")->required();
  ph_cmd->add_option("--size", ph_size, "side length (>=32, divisible by 8)")->required();
  ph_cmd->add_option("--noise", ph_noise, "additive Gaussian noise sigma");
  ph_cmd->add_option("--blur", ph_blur, "Gaussian blur sigma (pixels)");
  ph_cmd->add_option("--out", ph_out, "output directory")->required();

  std::string an_field, an_moving, an_fixed, an_out;
  auto* an_cmd = app.add_subcommand("analyze", "fold/Jacobian analysis of a DFLD field");
  an_cmd->add_option("--field", an_field, "field.dfld")->required();
  an_cmd->add_option("--moving", an_moving, "optional moving image for metrics");
  an_cmd->add_option("--fixed", an_fixed, "optional fixed image for metrics");
  an_cmd->add_option("--out", an_out, "output directory")->required();

  SweepFlags sweep;
  std::string grid_csv, seeds_csv;
  auto* sw_cmd = app.add_subcommand("sweep", "regularization parameter sweep");
  sw_cmd->add_option("--moving", sweep.reg.moving, "moving image")->required();
  sw_cmd->add_option("--fixed", sweep.reg.fixed, "fixed image")->required();
  sw_cmd->add_option("--loss", sweep.reg.loss, "similarity loss (default ssim+pcc)");
  sw_cmd->add_option("--reg", sweep.reg.reg, "regularizer kind")->required();
  sw_cmd->add_option("--param", sweep.param, "lambda|sigma|alpha (default by kind)");
  sw_cmd->add_option("--param-grid", grid_csv, "comma-separated values")->required();
  sw_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds")->required();
  sw_cmd->add_option("--iters", sweep.reg.iters, "iterations per cell");
  sw_cmd->add_option("--lr", sweep.reg.lr, "learning rate");
  sw_cmd->add_option("--lambda", sweep.reg.lambda, "base lambda when sweeping sigma/alpha");
  sw_cmd->add_option("--alpha", sweep.reg.alpha, "base alpha");
  sw_cmd->add_option("--sigma", sweep.reg.sigma, "base sigma");
  sw_cmd->add_option("--jobs", sweep.jobs, "parallel cells (capped by WARPFORGE_THREADS)");
  sw_cmd->add_option("--out", sweep.reg.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (*reg_cmd) return cmd_register(reg);
    if (*ph_cmd) return cmd_make_phantom(ph_kind, ph_size, ph_noise, ph_blur, ph_out);
    if (*an_cmd) return cmd_analyze(an_field, an_moving, an_fixed, an_out);
    if (*sw_cmd) {
      for (auto tok : CLI::detail::split(grid_csv, ','))
        sweep.grid.push_back(std::stod(tok));
      for (auto tok : CLI::detail::split(seeds_csv, ','))
        sweep.seeds.push_back(std::stoull(tok));
      return cmd_sweep(sweep);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::io:
      case ErrorCode::bad_format:
        return 3;
      case ErrorCode::numeric:
        return 4;
      default:
        return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
