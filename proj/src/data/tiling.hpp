#pragma once

#include <string>
#include <vector>

#include "data/image_io.hpp"

namespace stnet {

struct TileTriplet {
  int row = 0, col = 0;
  ImageU8 a, b, label;
};

// number of full tiles in a row-major grid with the given stride
int64_t tile_count(int h, int w, int size, int stride);

// Crops a co-registered raster triplet into size x size tiles at offsets
// (row*stride, col*stride); partial edge tiles are dropped.
std::vector<TileTriplet> tile_pair(const ImageU8& a, const ImageU8& b, const ImageU8& label,
                                   int size, int stride);

// writes tiles under out/{A,B,label}/<row>_<col>.(ppm|pgm); returns the count
int64_t write_tiles(const std::string& out_dir, const std::vector<TileTriplet>& tiles);

}  // namespace stnet
