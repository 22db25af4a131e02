#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "warpforge/rng.hpp"
#include "warpforge/tensor.hpp"
#include "warpforge/tensor_conv.hpp"

namespace warpforge {

// Hourglass generator f_theta(I_m, I_f) = phi. The encoder downsamples
// `depth` times (one 2x2 max pool per level); the bottleneck keeps the last
// encoder width; each decoder level is upconv + skip concat + two convs;
// the final upsampling feeds the head (one 3x3 stage at head_channels, then
// a 1x1 conv to the two displacement channels, no activation).
struct UNetConfig {
  int input_size = 0;  // square images, M x M
  std::vector<int> encoder_channels{16, 32, 64};
  std::vector<int> decoder_channels{64, 32};
  int head_channels = 16;
  int depth = 3;  // number of pooling levels
  uint64_t seed = 0;
};

void validate(const UNetConfig& config);

enum class LayerKind : uint8_t { conv3x3 = 0, conv1x1 = 1, upconv2x2 = 2 };

struct LayerSpec {
  LayerKind kind;
  int in_channels;
  int out_channels;

  int kernel() const { return kind == LayerKind::conv3x3 ? 3 : (kind == LayerKind::conv1x1 ? 1 : 2); }
  int64_t weight_count() const {
    return int64_t(in_channels) * out_channels * kernel() * kernel();
  }
  int64_t parameter_count() const { return weight_count() + out_channels; }
};

// The ordered layer list implied by a config; also the checkpoint order.
std::vector<LayerSpec> unet_layer_plan(const UNetConfig& config);

// Analytic total parameter count: sum over layers of k^2*Cin*Cout + Cout.
int64_t unet_parameter_count(const UNetConfig& config);

template <typename T>
struct UNetParams {
  UNetConfig config;
  std::vector<LayerSpec> layers;
  std::vector<std::vector<T>> weights;  // aligned with layers
  std::vector<std::vector<T>> biases;

  int64_t count() const {
    int64_t n = 0;
    for (const auto& w : weights) n += int64_t(w.size());
    for (const auto& b : biases) n += int64_t(b.size());
    return n;
  }
};

// He-style initialization: weights ~ N(0, 2/(k^2*Cin)), biases zero,
// reproducible from config.seed.
template <typename T>
UNetParams<T> unet_init(const UNetConfig& config) {
  validate(config);
  UNetParams<T> p;
  p.config = config;
  p.layers = unet_layer_plan(config);
  Rng rng(config.seed);
  for (const auto& layer : p.layers) {
    const double stddev =
        std::sqrt(2.0 / (double(layer.kernel()) * layer.kernel() * layer.in_channels));
    std::vector<T> w(std::size_t(layer.weight_count()));
    for (auto& v : w) v = T(stddev * rng.normal());
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(std::size_t(layer.out_channels), T(0));
  }
  return p;
}

template <typename T>
struct UNetLeaves {
  std::vector<Tensor<T>> weights;
  std::vector<Tensor<T>> biases;
};

template <typename T>
UNetLeaves<T> unet_leaves(Tape<T>& tape, const UNetParams<T>& params, bool requires_grad = true) {
  UNetLeaves<T> leaves;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    std::vector<int> wshape =
        layer.kind == LayerKind::upconv2x2
            ? std::vector<int>{layer.in_channels, layer.out_channels, 2, 2}
            : std::vector<int>{layer.out_channels, layer.in_channels, layer.kernel(), layer.kernel()};
    leaves.weights.push_back(tape.leaf(wshape, params.weights[i], requires_grad));
    leaves.biases.push_back(tape.leaf({layer.out_channels}, params.biases[i], requires_grad));
  }
  return leaves;
}

// Runs the network on a 2-channel stack of the moving and fixed images,
// returning the displacement field as a 2xMxM tensor (u_x, u_y in pixels).
template <typename T>
Tensor<T> unet_forward(const UNetConfig& config, const UNetLeaves<T>& leaves,
                       const Tensor<T>& moving, const Tensor<T>& fixed) {
  const int m = config.input_size;
  if (moving.shape() != std::vector<int>{m, m} || fixed.shape() != std::vector<int>{m, m})
    fail_shape("unet_forward: inputs must both be " + std::to_string(m) + "x" + std::to_string(m));
  std::size_t li = 0;
  auto conv_relu = [&](const Tensor<T>& x) {
    auto y = relu(conv2d(x, leaves.weights[li], leaves.biases[li], 1));
    ++li;
    return y;
  };

  auto x = concat_channels(reshape(moving, {1, m, m}), reshape(fixed, {1, m, m}));
  std::vector<Tensor<T>> skips;
  for (std::size_t level = 0; level < config.encoder_channels.size(); ++level) {
    x = conv_relu(conv_relu(x));
    skips.push_back(x);
    x = maxpool2x2(x);
  }
  x = conv_relu(conv_relu(x));  // bottleneck at the last encoder width
  for (std::size_t level = 0; level < config.decoder_channels.size(); ++level) {
    x = upconv2x2(x, leaves.weights[li], leaves.biases[li]);
    ++li;
    x = concat_channels(x, skips[skips.size() - 1 - level]);
    x = conv_relu(conv_relu(x));
  }
  x = upconv2x2(x, leaves.weights[li], leaves.biases[li]);
  ++li;
  x = concat_channels(x, skips.front());
  x = conv_relu(x);  // head 3x3 stage
  // final 1x1, deliberately no activation: displacements are signed
  auto field = conv2d(x, leaves.weights[li], leaves.biases[li], 0);
  ++li;
  return field;
}

// Parameter checkpoint ("UNPW"): magic, version u16, layer count u32, then
// per-layer kind/in/out header followed by little-endian float32 weights
// and biases. Needed only for resuming and debugging.
template <typename T>
void save_unet_params(const UNetParams<T>& params, const std::string& path);
template <typename T>
UNetParams<T> load_unet_params(const std::string& path);

}  // namespace warpforge
