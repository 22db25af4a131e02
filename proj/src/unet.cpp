#include "warpforge/unet.hpp"

#include <cstring>
#include <fstream>

namespace warpforge {

void validate(const UNetConfig& config) {
  if (config.input_size < 8) fail(ErrorCode::invalid_argument, "unet: input_size too small");
  if (config.depth < 1) fail(ErrorCode::invalid_argument, "unet: depth must be >= 1");
  if (int(config.encoder_channels.size()) != config.depth)
    fail(ErrorCode::invalid_argument, "unet: one encoder level per pooling level expected");
  if (config.decoder_channels.size() + 1 != config.encoder_channels.size())
    fail(ErrorCode::invalid_argument, "unet: decoder must have one level fewer than encoder");
  if (config.head_channels < 1) fail(ErrorCode::invalid_argument, "unet: head_channels must be >= 1");
  for (int c : config.encoder_channels)
    if (c < 1) fail(ErrorCode::invalid_argument, "unet: encoder widths must be positive");
  for (int c : config.decoder_channels)
    if (c < 1) fail(ErrorCode::invalid_argument, "unet: decoder widths must be positive");
  const int stride = 1 << config.depth;
  if (config.input_size % stride != 0)
    fail(ErrorCode::invalid_argument,
         "unet: input size " + std::to_string(config.input_size) + " not divisible by 2^depth = " +
             std::to_string(stride));
}

std::vector<LayerSpec> unet_layer_plan(const UNetConfig& config) {
  validate(config);
  std::vector<LayerSpec> plan;
  int channels = 2;  // moving and fixed stacked
  for (int width : config.encoder_channels) {
    plan.push_back({LayerKind::conv3x3, channels, width});
    plan.push_back({LayerKind::conv3x3, width, width});
    channels = width;
  }
  plan.push_back({LayerKind::conv3x3, channels, channels});
  plan.push_back({LayerKind::conv3x3, channels, channels});
  for (std::size_t level = 0; level < config.decoder_channels.size(); ++level) {
    const int width = config.decoder_channels[level];
    const int skip = config.encoder_channels[config.encoder_channels.size() - 1 - level];
    plan.push_back({LayerKind::upconv2x2, channels, width});
    plan.push_back({LayerKind::conv3x3, width + skip, width});
    plan.push_back({LayerKind::conv3x3, width, width});
    channels = width;
  }
  plan.push_back({LayerKind::upconv2x2, channels, config.head_channels});
  plan.push_back({LayerKind::conv3x3, config.head_channels + config.encoder_channels.front(),
                  config.head_channels});
  plan.push_back({LayerKind::conv1x1, config.head_channels, 2});
  return plan;
}

int64_t unet_parameter_count(const UNetConfig& config) {
  int64_t total = 0;
  for (const auto& layer : unet_layer_plan(config)) total += layer.parameter_count();
  return total;
}

namespace {

constexpr char kMagic[4] = {'U', 'N', 'P', 'W'};
constexpr uint16_t kVersion = 1;

void write_u16(std::ofstream& out, uint16_t v) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ofstream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

uint16_t read_u16(std::ifstream& in, uint64_t& offset) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw Error(ErrorCode::bad_format, "checkpoint truncated", offset);
  offset += 2;
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

uint32_t read_u32(std::ifstream& in, uint64_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error(ErrorCode::bad_format, "checkpoint truncated", offset);
  offset += 4;
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

float read_f32(std::ifstream& in, uint64_t& offset) {
  uint32_t bits = read_u32(in, offset);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

template <typename T>
void save_unet_params(const UNetParams<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_u16(out, kVersion);
  write_u32(out, uint32_t(params.layers.size()));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    out.put(char(layer.kind));
    write_u32(out, uint32_t(layer.in_channels));
    write_u32(out, uint32_t(layer.out_channels));
    for (T v : params.weights[i]) write_f32(out, float(v));
    for (T v : params.biases[i]) write_f32(out, float(v));
  }
  if (!out) fail(ErrorCode::io, "short write to '" + path + "'");
}

template <typename T>
UNetParams<T> load_unet_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  uint64_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::bad_format, "not a UNPW checkpoint", 0);
  offset = 4;
  const uint16_t version = read_u16(in, offset);
  if (version != kVersion)
    throw Error(ErrorCode::bad_format, "unsupported checkpoint version " + std::to_string(version),
                4);
  const uint32_t layer_count = read_u32(in, offset);
  UNetParams<T> params;
  for (uint32_t i = 0; i < layer_count; ++i) {
    const int kind_byte = in.get();
    if (kind_byte < 0) throw Error(ErrorCode::bad_format, "checkpoint truncated", offset);
    ++offset;
    if (kind_byte > 2) throw Error(ErrorCode::bad_format, "bad layer kind", offset - 1);
    LayerSpec layer{LayerKind(kind_byte), int(read_u32(in, offset)), int(read_u32(in, offset))};
    std::vector<T> w(std::size_t(layer.weight_count()));
    for (auto& v : w) v = T(read_f32(in, offset));
    std::vector<T> b(std::size_t(layer.out_channels));
    for (auto& v : b) v = T(read_f32(in, offset));
    params.layers.push_back(layer);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

template void save_unet_params<float>(const UNetParams<float>&, const std::string&);
template void save_unet_params<double>(const UNetParams<double>&, const std::string&);
template UNetParams<float> load_unet_params<float>(const std::string&);
template UNetParams<double> load_unet_params<double>(const std::string&);

}  // namespace warpforge
