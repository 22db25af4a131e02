#include "warpforge/engine.hpp"

#include <chrono>
#include <cmath>

#include "warpforge/tensor_image.hpp"

namespace warpforge {

Image prefilter_fixed(const Image& fixed, double sigma) {
  if (!(sigma > 0)) fail(ErrorCode::invalid_argument, "prefilter: sigma must be > 0");
  Tape<float> tape;
  auto leaf = tape.leaf({fixed.height, fixed.width}, fixed.values, false);
  Image out(fixed.height, fixed.width);
  out.values = gaussian_blur(leaf, sigma).value();
  return out;
}

namespace {

double image_variance(const Image& img) {
  double m = 0;
  for (float v : img.values) m += v;
  m /= double(img.pixel_count());
  double acc = 0;
  for (float v : img.values) acc += (v - m) * (v - m);
  return acc / double(img.pixel_count());
}

template <typename T>
RegistrationOutput run_registration(const Image& moving, const Image& fixed,
                                    const LabelMap* labels, const RegistrationConfig& config) {
  check_same_size(moving, fixed, "register");
  if (moving.height != moving.width)
    fail_shape("register: images must be square, got " + std::to_string(moving.width) + "x" +
               std::to_string(moving.height));
  if (labels && (labels->height != moving.height || labels->width != moving.width))
    fail_shape("register: label map size does not match images");
  if (config.iterations < 1) fail(ErrorCode::invalid_argument, "register: iterations must be >= 1");
  if (!(config.learning_rate > 0)) fail(ErrorCode::invalid_argument, "register: learning_rate must be > 0");
  validate(config.regularizer);

  const auto sim_kind = config.similarity.kind;
  if (sim_kind == SimilarityKind::pcc || sim_kind == SimilarityKind::ssim ||
      sim_kind == SimilarityKind::ssim_pcc) {
    if (!(image_variance(fixed) > 0))
      fail(ErrorCode::invalid_argument,
           "register: fixed image has zero variance, correlation-based losses are undefined");
  }

  const auto t_start = std::chrono::steady_clock::now();
  const int m = moving.height;

  UNetConfig net_config = config.unet;
  net_config.input_size = m;
  net_config.seed = config.seed;
  auto params = unet_init<T>(net_config);
  auto optim = make_optim_state(params);

  const Image fixed_used =
      config.prefilter_sigma > 0 ? prefilter_fixed(fixed, config.prefilter_sigma) : fixed;
  std::vector<T> moving_data(moving.values.begin(), moving.values.end());
  std::vector<T> fixed_data(fixed_used.values.begin(), fixed_used.values.end());

  const bool use_penalty =
      (config.regularizer.kind == RegularizerKind::diffusion ||
       config.regularizer.kind == RegularizerKind::tv ||
       config.regularizer.kind == RegularizerKind::diffusion_jacobian) &&
      config.regularizer.lambda > 0;
  const bool smooth_output = config.regularizer.kind == RegularizerKind::gaussian_smoothing;

  RegistrationResult result;
  result.loss_trace.reserve(std::size_t(config.iterations));
  std::vector<T> final_field;
  std::vector<T> final_deformed;

  Tape<T> tape;
  UNetGrads<T> grads;
  grads.weights.resize(params.layers.size());
  grads.biases.resize(params.layers.size());

  for (int iter = 0; iter < config.iterations; ++iter) {
    tape.reset();
    auto leaves = unet_leaves(tape, params, true);
    auto moving_leaf = tape.leaf({m, m}, moving_data, false);
    auto fixed_leaf = tape.leaf({m, m}, fixed_data, false);

    auto field = unet_forward(net_config, leaves, moving_leaf, fixed_leaf);
    for (T v : field.value())
      if (!std::isfinite(double(v)))
        fail(ErrorCode::numeric,
             "register: displacement field became non-finite at iteration " + std::to_string(iter));
    if (smooth_output) field = gaussian_smooth_field(field, config.regularizer.sigma);
    auto deformed = warp_bilinear(moving_leaf, field);
    auto sim_loss = similarity_loss(deformed, fixed_leaf, config.similarity);

    Tensor<T> total;
    double reg_value = 0;
    if (use_penalty) {
      auto reg = regularizer_penalty(field, config.regularizer);
      reg_value = double(reg.scalar());
      total = add(sim_loss, mul_scalar(reg, T(config.regularizer.lambda)));
    } else {
      total = sim_loss;
    }

    if (!std::isfinite(double(total.scalar())))
      fail(ErrorCode::numeric,
           "register: loss became non-finite at iteration " + std::to_string(iter));
    const double sim_value = double(sim_loss.scalar());
    result.loss_trace.push_back(
        {sim_value + config.regularizer.lambda * reg_value, sim_value, reg_value});

    tape.backward(total);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      grads.weights[i] = tape.grad_buf(leaves.weights[i].node());
      grads.biases[i] = tape.grad_buf(leaves.biases[i].node());
    }
    if (iter + 1 == config.iterations) {
      final_field = field.value();
      final_deformed = deformed.value();
    }
    if (config.optimizer.kind == OptimizerKind::adam) {
      adam_step(params, grads, optim, T(config.learning_rate), T(config.optimizer.beta1),
                T(config.optimizer.beta2), T(config.optimizer.epsilon));
    } else {
      sgd_step(params, grads, optim, T(config.learning_rate), T(config.optimizer.momentum));
    }
  }

  result.iterations_run = config.iterations;
  result.field = DisplacementField(m, m);
  for (std::size_t i = 0; i < final_field.size(); ++i) result.field.data[i] = float(final_field[i]);
  result.deformed = Image(m, m);
  for (std::size_t i = 0; i < final_deformed.size(); ++i)
    result.deformed.values[i] = float(final_deformed[i]);
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  RegistrationOutput output;
  output.result = std::move(result);
  if (labels) output.warped_labels = warp_nearest(*labels, output.result.field);
  return output;
}

}  // namespace

RegistrationOutput register_pair(const Image& moving, const Image& fixed, const LabelMap* labels,
                                 const RegistrationConfig& config) {
  if (config.precision == Precision::f64)
    return run_registration<double>(moving, fixed, labels, config);
  return run_registration<float>(moving, fixed, labels, config);
}

}  // namespace warpforge
