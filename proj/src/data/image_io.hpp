#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stnet {

// 8-bit raster, interleaved channels, row-major. c is 1 (grayscale) or 3 (RGB).
struct ImageU8 {
  int w = 0, h = 0, c = 1;
  std::vector<uint8_t> data;

  ImageU8() = default;
  ImageU8(int w_, int h_, int c_) : w(w_), h(h_), c(c_), data(static_cast<size_t>(w_) * h_ * c_) {}

  uint8_t& at(int y, int x, int ch) {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  uint8_t at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

struct ImageHeader {
  int w = 0, h = 0, c = 1;
};

// Binary NetPBM: P6 (RGB) and P5 (grayscale), maxval 255.
ImageU8 read_image(const std::string& path);
ImageHeader read_image_header(const std::string& path);
void write_image(const std::string& path, const ImageU8& img);

// 16-bit big-endian PGM (P5 maxval 65535); used for probability rasters
void write_pgm16(const std::string& path, const std::vector<uint16_t>& data, int w, int h);

}  // namespace stnet
