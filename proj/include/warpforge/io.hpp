#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "warpforge/image.hpp"

namespace warpforge {

// Grayscale image I/O. Formats by extension:
//   .png  8/16-bit grayscale PNG (written as 16-bit)
//   .pgm  binary P5, maxval 255 or 65535 (written as 65535)
//   .f32  raw little-endian float32 row-major, with a JSON sidecar
//         "<path>.hdr" holding {"width": W, "height": H}
// Integer samples normalize by the declared bit depth (not the sample
// min/max); float samples are clamped to [0,1].
Image read_image(const std::string& path);
void write_image(const Image& image, const std::string& path);

// Label maps ride in PNG/PGM containers with raw (un-normalized) samples.
LabelMap read_labels(const std::string& path);
void write_labels(const LabelMap& labels, const std::string& path);

// Displacement field format "DFLD": magic, version u16 = 1, width u32,
// height u32, then H*W (u_x, u_y) float32 pairs, row-major, all
// little-endian. Round-trips are bitwise lossless.
DisplacementField read_field(const std::string& path);
void write_field(const DisplacementField& field, const std::string& path);

// ---- low-level PNG codec (grayscale + rgb8), shared by the image I/O ----

namespace png {

struct Gray {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<uint16_t> samples;
};

Gray read_gray(const std::string& path);
void write_gray(const Gray& image, const std::string& path);
void write_rgb8(int width, int height, const std::vector<uint8_t>& rgb, const std::string& path);

}  // namespace png

uint32_t file_crc32(const std::string& path);

}  // namespace warpforge
