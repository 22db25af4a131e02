#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "warpforge/image.hpp"
#include "warpforge/regularize.hpp"
#include "warpforge/similarity.hpp"
#include "warpforge/unet.hpp"

namespace warpforge {

enum class Precision { f32, f64 };
enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd only
};

struct RegistrationConfig {
  int iterations = 300;
  SimilaritySpec similarity;
  RegularizerSpec regularizer;
  double learning_rate = 1e-3;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  double prefilter_sigma = 0.0;  // > 0 blurs the fixed image once, before the loop
  Precision precision = Precision::f32;
  UNetConfig unet;  // input_size and seed are filled in from the images/seed
};

// Default iteration budget by image side length.
inline int default_iterations(int size) { return size <= 128 ? 300 : 1500; }

struct LossSample {
  double total = 0;
  double similarity = 0;
  double regularizer = 0;  // unweighted penalty value; 0 when lambda == 0
};

struct RegistrationResult {
  DisplacementField field;
  Image deformed;
  std::vector<LossSample> loss_trace;
  double wall_time_seconds = 0;
  int iterations_run = 0;
};

struct RegistrationOutput {
  RegistrationResult result;
  std::optional<LabelMap> warped_labels;
};

// The per-pair optimization loop: init a fresh network, then iterate
// field -> warp -> loss -> backprop -> parameter update. No state persists
// across calls.
RegistrationOutput register_pair(const Image& moving, const Image& fixed, const LabelMap* labels,
                                 const RegistrationConfig& config);

// Gaussian pre-filtering of the fixed image (applied once, outside the loop).
Image prefilter_fixed(const Image& fixed, double sigma);

// ---- optimizer (exposed for tests) ----

template <typename T>
struct OptimState {
  std::vector<std::vector<T>> m_w, v_w, m_b, v_b;  // adam moments / sgd velocity in m_*
  int64_t step = 0;
};

template <typename T>
struct UNetGrads {
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;
};

template <typename T>
OptimState<T> make_optim_state(const UNetParams<T>& params) {
  OptimState<T> s;
  for (const auto& w : params.weights) {
    s.m_w.emplace_back(w.size(), T(0));
    s.v_w.emplace_back(w.size(), T(0));
  }
  for (const auto& b : params.biases) {
    s.m_b.emplace_back(b.size(), T(0));
    s.v_b.emplace_back(b.size(), T(0));
  }
  return s;
}

namespace engine_detail {

template <typename T>
void adam_update(std::vector<T>& p, const std::vector<T>& g, std::vector<T>& m, std::vector<T>& v,
                 int64_t t, T lr, T beta1, T beta2, T eps) {
  const T bc1 = T(1) - std::pow(beta1, T(t));
  const T bc2 = T(1) - std::pow(beta2, T(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
void sgd_update(std::vector<T>& p, const std::vector<T>& g, std::vector<T>& vel, T lr, T momentum) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    vel[i] = momentum * vel[i] + g[i];
    p[i] -= lr * vel[i];
  }
}

}  // namespace engine_detail

// First/second-moment update with bias correction; deterministic.
template <typename T>
void adam_step(UNetParams<T>& params, const UNetGrads<T>& grads, OptimState<T>& state, T lr,
               T beta1, T beta2, T eps) {
  if (grads.weights.size() != params.weights.size())
    fail_shape("adam_step: gradient/parameter layer counts differ");
  ++state.step;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    engine_detail::adam_update(params.weights[i], grads.weights[i], state.m_w[i], state.v_w[i],
                               state.step, lr, beta1, beta2, eps);
    engine_detail::adam_update(params.biases[i], grads.biases[i], state.m_b[i], state.v_b[i],
                               state.step, lr, beta1, beta2, eps);
  }
}

template <typename T>
void sgd_step(UNetParams<T>& params, const UNetGrads<T>& grads, OptimState<T>& state, T lr,
              T momentum) {
  ++state.step;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    engine_detail::sgd_update(params.weights[i], grads.weights[i], state.m_w[i], lr, momentum);
    engine_detail::sgd_update(params.biases[i], grads.biases[i], state.m_b[i], lr, momentum);
  }
}

}  // namespace warpforge
