#include "data/tiling.hpp"

#include <cstdio>
#include <filesystem>

#include "core/error.hpp"

namespace fs = std::filesystem;

namespace stnet {

int64_t tile_count(int h, int w, int size, int stride) {
  if (h < size || w < size) return 0;
  return (static_cast<int64_t>(h - size) / stride + 1) * ((w - size) / stride + 1);
}

namespace {

ImageU8 crop(const ImageU8& img, int y0, int x0, int size) {
  ImageU8 out(size, size, img.c);
  for (int y = 0; y < size; ++y) {
    const uint8_t* src = img.data.data() + ((static_cast<size_t>(y0) + y) * img.w + x0) * img.c;
    std::copy(src, src + static_cast<size_t>(size) * img.c,
              out.data.begin() + static_cast<size_t>(y) * size * img.c);
  }
  return out;
}

}  // namespace

std::vector<TileTriplet> tile_pair(const ImageU8& a, const ImageU8& b, const ImageU8& label,
                                   int size, int stride) {
  if (size <= 0 || size % 32 != 0) usage_error("tile size must be a positive multiple of 32");
  if (stride < 1) usage_error("tile stride must be >= 1");
  if (a.w != b.w || a.h != b.h || a.w != label.w || a.h != label.h)
    data_error("co-registration error: raster dimensions differ");
  if (a.h < size || a.w < size)
    data_error("raster " + std::to_string(a.w) + "x" + std::to_string(a.h) +
               " is smaller than the tile size " + std::to_string(size));
  std::vector<TileTriplet> tiles;
  for (int row = 0; row * stride + size <= a.h; ++row)
    for (int col = 0; col * stride + size <= a.w; ++col) {
      TileTriplet t;
      t.row = row;
      t.col = col;
      t.a = crop(a, row * stride, col * stride, size);
      t.b = crop(b, row * stride, col * stride, size);
      t.label = crop(label, row * stride, col * stride, size);
      tiles.push_back(std::move(t));
    }
  return tiles;
}

int64_t write_tiles(const std::string& out_dir, const std::vector<TileTriplet>& tiles) {
  for (const char* sub : {"A", "B", "label"}) fs::create_directories(fs::path(out_dir) / sub);
  for (const auto& t : tiles) {
    char name[64];
    std::snprintf(name, sizeof(name), "%04d_%04d", t.row, t.col);
    write_image((fs::path(out_dir) / "A" / (std::string(name) + ".pnm")).string(), t.a);
    write_image((fs::path(out_dir) / "B" / (std::string(name) + ".pnm")).string(), t.b);
    write_image((fs::path(out_dir) / "label" / (std::string(name) + ".pnm")).string(), t.label);
  }
  return static_cast<int64_t>(tiles.size());
}

}  // namespace stnet
