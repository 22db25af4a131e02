#include "warpforge/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace warpforge {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

enum class Format { png, pgm, f32 };

Format format_for(const std::string& path) {
  if (ends_with(path, ".png")) return Format::png;
  if (ends_with(path, ".pgm")) return Format::pgm;
  if (ends_with(path, ".f32")) return Format::f32;
  fail(ErrorCode::bad_format,
       "unsupported image format for '" + path + "' (expected .png, .pgm or .f32)");
}

// ---- PGM (binary P5) ----

struct PgmData {
  int width = 0, height = 0, maxval = 0;
  std::vector<uint16_t> samples;
};

PgmData read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) { ++pos; continue; }
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw Error(ErrorCode::bad_format, "pgm: unexpected end of header", start);
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw Error(ErrorCode::bad_format, "'" + path + "' is not a binary PGM (P5)", 0);
  pos = 2;
  PgmData pgm;
  try {
    pgm.width = std::stoi(token());
    pgm.height = std::stoi(token());
    pgm.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::bad_format, "pgm: malformed header", pos);
  }
  if (pgm.width <= 0 || pgm.height <= 0 || pgm.maxval <= 0 || pgm.maxval > 65535)
    throw Error(ErrorCode::bad_format, "pgm: bad dimensions or maxval", pos);
  ++pos;  // single whitespace after maxval
  const int bytes_per = pgm.maxval > 255 ? 2 : 1;
  const std::size_t need = std::size_t(pgm.width) * pgm.height * bytes_per;
  if (pos + need > bytes.size())
    throw Error(ErrorCode::bad_format, "pgm: truncated pixel data", bytes.size());
  pgm.samples.resize(std::size_t(pgm.width) * pgm.height);
  for (std::size_t i = 0; i < pgm.samples.size(); ++i) {
    if (bytes_per == 1) pgm.samples[i] = bytes[pos + i];
    else pgm.samples[i] = uint16_t(bytes[pos + 2 * i]) << 8 | bytes[pos + 2 * i + 1];
  }
  return pgm;
}

void write_pgm(int width, int height, const std::vector<uint16_t>& samples,
               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << "P5\n" << width << " " << height << "\n65535\n";
  std::vector<unsigned char> bytes(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[2 * i] = (unsigned char)(samples[i] >> 8);
    bytes[2 * i + 1] = (unsigned char)(samples[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorCode::io, "short write to '" + path + "'");
}

// ---- raw float32 with JSON sidecar ----

Image read_f32(const std::string& path) {
  nlohmann::json header;
  {
    std::ifstream hdr(path + ".hdr");
    if (!hdr) fail(ErrorCode::io, "missing sidecar header '" + path + ".hdr'");
    try {
      hdr >> header;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::bad_format, std::string("bad sidecar header: ") + e.what(), 0);
    }
  }
  if (!header.contains("width") || !header.contains("height"))
    throw Error(ErrorCode::bad_format, "sidecar header must declare width and height", 0);
  const int width = header["width"].get<int>();
  const int height = header["height"].get<int>();
  if (width <= 0 || height <= 0) throw Error(ErrorCode::bad_format, "sidecar header: bad size", 0);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  Image image(height, width);
  in.read(reinterpret_cast<char*>(image.values.data()),
          std::streamsize(image.values.size() * sizeof(float)));
  if (std::size_t(in.gcount()) != image.values.size() * sizeof(float))
    throw Error(ErrorCode::bad_format, "raw float payload truncated", uint64_t(in.gcount()));
  for (auto& v : image.values) {
    if (!std::isfinite(v)) fail(ErrorCode::bad_format, "raw float payload contains non-finite values");
    v = std::clamp(v, 0.0f, 1.0f);
  }
  return image;
}

void write_f32(const Image& image, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(image.values.data()),
              std::streamsize(image.values.size() * sizeof(float)));
    if (!out) fail(ErrorCode::io, "short write to '" + path + "'");
  }
  nlohmann::json header{{"width", image.width}, {"height", image.height}, {"dtype", "float32le"}};
  std::ofstream hdr(path + ".hdr");
  if (!hdr) fail(ErrorCode::io, "cannot open '" + path + ".hdr' for writing");
  hdr << header.dump(2) << "\n";
}

}  // namespace

Image read_image(const std::string& path) {
  switch (format_for(path)) {
    case Format::png: {
      const auto gray = png::read_gray(path);
      Image image(gray.height, gray.width);
      const float scale = 1.0f / float((1u << gray.bit_depth) - 1);
      for (std::size_t i = 0; i < gray.samples.size(); ++i)
        image.values[i] = float(gray.samples[i]) * scale;
      return image;
    }
    case Format::pgm: {
      const auto pgm = read_pgm(path);
      Image image(pgm.height, pgm.width);
      const float scale = 1.0f / float(pgm.maxval);
      for (std::size_t i = 0; i < pgm.samples.size(); ++i)
        image.values[i] = float(pgm.samples[i]) * scale;
      return image;
    }
    case Format::f32:
      return read_f32(path);
  }
  fail(ErrorCode::bad_format, "unreachable");
}

void write_image(const Image& image, const std::string& path) {
  const auto format = format_for(path);
  if (format == Format::f32) {
    write_f32(image, path);
    return;
  }
  std::vector<uint16_t> samples(image.pixel_count());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const float v = std::clamp(image.values[i], 0.0f, 1.0f);
    samples[i] = uint16_t(std::lround(double(v) * 65535.0));
  }
  if (format == Format::png) {
    png::Gray gray;
    gray.width = image.width;
    gray.height = image.height;
    gray.bit_depth = 16;
    gray.samples = std::move(samples);
    png::write_gray(gray, path);
  } else {
    write_pgm(image.width, image.height, samples, path);
  }
}

LabelMap read_labels(const std::string& path) {
  std::vector<uint16_t> samples;
  int width = 0, height = 0;
  if (format_for(path) == Format::png) {
    auto gray = png::read_gray(path);
    samples = std::move(gray.samples);
    width = gray.width;
    height = gray.height;
  } else if (format_for(path) == Format::pgm) {
    auto pgm = read_pgm(path);
    samples = std::move(pgm.samples);
    width = pgm.width;
    height = pgm.height;
  } else {
    fail(ErrorCode::bad_format, "label maps must be .png or .pgm");
  }
  LabelMap labels(height, width);
  for (std::size_t i = 0; i < samples.size(); ++i) labels.labels[i] = samples[i];
  return labels;
}

void write_labels(const LabelMap& labels, const std::string& path) {
  std::vector<uint16_t> samples(labels.labels.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int32_t v = labels.labels[i];
    if (v < 0 || v > 65535)
      fail(ErrorCode::invalid_argument, "label value " + std::to_string(v) + " out of 16-bit range");
    samples[i] = uint16_t(v);
  }
  if (format_for(path) == Format::png) {
    png::Gray gray;
    gray.width = labels.width;
    gray.height = labels.height;
    gray.bit_depth = 16;
    gray.samples = std::move(samples);
    png::write_gray(gray, path);
  } else if (format_for(path) == Format::pgm) {
    write_pgm(labels.width, labels.height, samples, path);
  } else {
    fail(ErrorCode::bad_format, "label maps must be .png or .pgm");
  }
}

namespace {

constexpr char kFieldMagic[4] = {'D', 'F', 'L', 'D'};
constexpr uint16_t kFieldVersion = 1;

}  // namespace

DisplacementField read_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFieldMagic, 4) != 0)
    throw Error(ErrorCode::bad_format, "'" + path + "' is not a DFLD field file", 0);
  if (bytes.size() < 14) throw Error(ErrorCode::bad_format, "DFLD header truncated", bytes.size());
  const uint16_t version = uint16_t(bytes[4]) | uint16_t(bytes[5]) << 8;
  if (version != kFieldVersion)
    throw Error(ErrorCode::bad_format, "unsupported DFLD version " + std::to_string(version), 4);
  auto u32 = [&](std::size_t at) {
    return uint32_t(bytes[at]) | uint32_t(bytes[at + 1]) << 8 | uint32_t(bytes[at + 2]) << 16 |
           uint32_t(bytes[at + 3]) << 24;
  };
  const uint32_t width = u32(6);
  const uint32_t height = u32(10);
  if (width == 0 || height == 0 || width > (1u << 20) || height > (1u << 20))
    throw Error(ErrorCode::bad_format, "DFLD: implausible dimensions", 6);
  const std::size_t expect = 14 + 8 * std::size_t(width) * height;
  if (bytes.size() != expect)
    throw Error(ErrorCode::bad_format,
                "DFLD payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expect),
                bytes.size());
  DisplacementField field{int(height), int(width)};
  const std::size_t plane = field.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    float ux, uy;
    std::memcpy(&ux, bytes.data() + 14 + 8 * i, 4);
    std::memcpy(&uy, bytes.data() + 14 + 8 * i + 4, 4);
    field.data[i] = ux;
    field.data[plane + i] = uy;
  }
  return field;
}

void write_field(const DisplacementField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(kFieldMagic, 4);
  const unsigned char version[2] = {kFieldVersion & 0xff, kFieldVersion >> 8};
  out.write(reinterpret_cast<const char*>(version), 2);
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(uint32_t(field.width));
  put_u32(uint32_t(field.height));
  const std::size_t plane = field.plane();
  std::vector<unsigned char> payload(8 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    std::memcpy(payload.data() + 8 * i, &field.data[i], 4);
    std::memcpy(payload.data() + 8 * i + 4, &field.data[plane + i], 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
  if (!out) fail(ErrorCode::io, "short write to '" + path + "'");
}

}  // namespace warpforge
