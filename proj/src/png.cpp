#include <zlib.h>

#include <cstring>
#include <fstream>

#include "warpforge/error.hpp"
#include "warpforge/io.hpp"

// Minimal PNG codec: non-interlaced grayscale (8/16-bit) in and out, plus
// 8-bit RGB out for rendered maps. Good enough for the file formats this
// project emits and reads back; anything else is rejected with the offset
// of the offending chunk.

namespace warpforge {
namespace png {

namespace {

const unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back((unsigned char)(v >> 24));
  out.push_back((unsigned char)(v >> 16));
  out.push_back((unsigned char)(v >> 8));
  out.push_back((unsigned char)(v));
}

uint32_t get_u32be(const unsigned char* p) {
  return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_u32be(out, uint32_t(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0, out.data() + type_at, uInt(4 + data.size()));
  put_u32be(out, uint32_t(crc));
}

std::vector<unsigned char> deflate_bytes(const std::vector<unsigned char>& raw) {
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> packed(bound);
  if (compress2(packed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
    fail(ErrorCode::io, "png: deflate failed");
  packed.resize(bound);
  return packed;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorCode::io, "short write to '" + path + "'");
}

void encode(const std::string& path, int width, int height, int bit_depth, int color_type,
            const std::vector<unsigned char>& scanline_bytes) {
  const int channels = color_type == 2 ? 3 : 1;
  const std::size_t row_bytes = std::size_t(width) * channels * (bit_depth / 8);
  std::vector<unsigned char> raw;
  raw.reserve((row_bytes + 1) * std::size_t(height));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), scanline_bytes.begin() + std::size_t(y) * row_bytes,
               scanline_bytes.begin() + std::size_t(y + 1) * row_bytes);
  }
  std::vector<unsigned char> out(kSignature, kSignature + 8);
  std::vector<unsigned char> ihdr;
  put_u32be(ihdr, uint32_t(width));
  put_u32be(ihdr, uint32_t(height));
  ihdr.push_back((unsigned char)bit_depth);
  ihdr.push_back((unsigned char)color_type);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", deflate_bytes(raw));
  append_chunk(out, "IEND", {});
  write_file(path, out);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_gray(const Gray& image, const std::string& path) {
  if (image.bit_depth != 8 && image.bit_depth != 16)
    fail(ErrorCode::invalid_argument, "png: bit depth must be 8 or 16");
  std::vector<unsigned char> bytes;
  bytes.reserve(image.samples.size() * (image.bit_depth / 8));
  for (uint16_t s : image.samples) {
    if (image.bit_depth == 16) bytes.push_back((unsigned char)(s >> 8));  // network order
    bytes.push_back((unsigned char)(s & 0xff));
  }
  encode(path, image.width, image.height, image.bit_depth, 0, bytes);
}

void write_rgb8(int width, int height, const std::vector<uint8_t>& rgb, const std::string& path) {
  if (rgb.size() != std::size_t(width) * height * 3)
    fail_shape("png: rgb buffer size does not match dimensions");
  encode(path, width, height, 8, 2, rgb);
}

Gray read_gray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw Error(ErrorCode::bad_format, "'" + path + "' is not a PNG file", 0);

  Gray image;
  int color_type = -1;
  std::vector<unsigned char> idat;
  std::size_t pos = 8;
  bool saw_end = false;
  while (!saw_end) {
    if (pos + 8 > bytes.size())
      throw Error(ErrorCode::bad_format, "png: truncated chunk header", pos);
    const uint32_t length = get_u32be(bytes.data() + pos);
    if (pos + 12 + length > bytes.size())
      throw Error(ErrorCode::bad_format, "png: truncated chunk payload", pos);
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const unsigned char* data = bytes.data() + pos + 8;
    const uint32_t stored_crc = get_u32be(data + length);
    if (uint32_t(crc32(0, bytes.data() + pos + 4, uInt(4 + length))) != stored_crc)
      throw Error(ErrorCode::bad_format, "png: chunk CRC mismatch", pos + 8 + length);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (length != 13) throw Error(ErrorCode::bad_format, "png: bad IHDR length", pos);
      image.width = int(get_u32be(data));
      image.height = int(get_u32be(data + 4));
      image.bit_depth = data[8];
      color_type = data[9];
      if (image.width <= 0 || image.height <= 0)
        throw Error(ErrorCode::bad_format, "png: bad dimensions", pos + 8);
      if (color_type != 0)
        throw Error(ErrorCode::bad_format, "png: only grayscale (color type 0) is supported",
                    pos + 8 + 9);
      if (image.bit_depth != 8 && image.bit_depth != 16)
        throw Error(ErrorCode::bad_format, "png: only 8/16-bit grayscale is supported", pos + 8 + 8);
      if (data[12] != 0) throw Error(ErrorCode::bad_format, "png: interlacing unsupported", pos + 8 + 12);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + length);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
    }
    pos += 12 + length;
  }
  if (color_type < 0) throw Error(ErrorCode::bad_format, "png: missing IHDR", 8);

  const int bpp = image.bit_depth / 8;
  const std::size_t row_bytes = std::size_t(image.width) * bpp;
  const std::size_t raw_size = (row_bytes + 1) * std::size_t(image.height);
  std::vector<unsigned char> raw(raw_size);
  uLongf raw_len = uLongf(raw_size);
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
  if (zrc != Z_OK || raw_len != raw_size)
    throw Error(ErrorCode::bad_format, "png: corrupt or short IDAT stream", 8);

  // Undo the per-row filters in place.
  std::vector<unsigned char> pixels(row_bytes * std::size_t(image.height));
  for (int y = 0; y < image.height; ++y) {
    const unsigned char filter = raw[(row_bytes + 1) * std::size_t(y)];
    const unsigned char* src = raw.data() + (row_bytes + 1) * std::size_t(y) + 1;
    unsigned char* dst = pixels.data() + row_bytes * std::size_t(y);
    const unsigned char* above = y > 0 ? pixels.data() + row_bytes * std::size_t(y - 1) : nullptr;
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int left = i >= std::size_t(bpp) ? dst[i - bpp] : 0;
      const int up = above ? above[i] : 0;
      const int up_left = (above && i >= std::size_t(bpp)) ? above[i - bpp] : 0;
      int value = src[i];
      switch (filter) {
        case 0: break;
        case 1: value += left; break;
        case 2: value += up; break;
        case 3: value += (left + up) / 2; break;
        case 4: value += paeth(left, up, up_left); break;
        default:
          throw Error(ErrorCode::bad_format, "png: unknown filter type", 8);
      }
      dst[i] = (unsigned char)(value & 0xff);
    }
  }

  image.samples.resize(std::size_t(image.width) * image.height);
  if (image.bit_depth == 8) {
    for (std::size_t i = 0; i < image.samples.size(); ++i) image.samples[i] = pixels[i];
  } else {
    for (std::size_t i = 0; i < image.samples.size(); ++i)
      image.samples[i] = uint16_t(pixels[2 * i]) << 8 | pixels[2 * i + 1];
  }
  return image;
}

}  // namespace png

uint32_t file_crc32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  uLong crc = crc32(0, nullptr, 0);
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof buffer);
    crc = crc32(crc, reinterpret_cast<const unsigned char*>(buffer), uInt(in.gcount()));
  }
  return uint32_t(crc);
}

}  // namespace warpforge
