#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmic/common.hpp"

namespace gmic {

struct ImageU16 {
  i64 h = 0, w = 0;
  std::vector<std::uint16_t> px;
};

struct ImageU8 {
  i64 h = 0, w = 0;
  std::vector<std::uint8_t> px;
};

struct ImageRGB8 {
  i64 h = 0, w = 0;
  std::vector<std::uint8_t> px;  // interleaved, 3 bytes per pixel
};

// 16-bit grayscale PNG (image data); throws DataError on I/O problems.
void write_png16(const std::string& path, const ImageU16& img);
ImageU16 read_png16(const std::string& path);

// 8-bit grayscale PNG (masks, values {0,255})
void write_png8(const std::string& path, const ImageU8& img);
ImageU8 read_png8(const std::string& path);

// 8-bit RGB PNG (visualization overlays)
void write_png_rgb8(const std::string& path, const ImageRGB8& img);

}  // namespace gmic
