#include "data/augment.hpp"

#include "core/error.hpp"

namespace stnet {

AugmentDraw draw_augment(Rng& rng) {
  AugmentDraw d;
  d.hflip = rng.coin();
  d.vflip = rng.coin();
  bool rotate = rng.coin();
  int k = rng.uniform_int(0, 3);
  d.quarter_turns = rotate ? k : 0;
  return d;
}

namespace {

// (y, x) -> source coordinate for hflip/vflip followed by k quarter turns
struct CoordMap {
  int size;
  AugmentDraw d;

  std::pair<int, int> source(int y, int x) const {
    // invert the rotation first (output coord -> pre-rotation coord)
    for (int i = 0; i < d.quarter_turns; ++i) {
      // rotation by 90 degrees counter-clockwise maps (y,x) <- (x, S-1-y)
      int ny = x, nx = size - 1 - y;
      y = ny;
      x = nx;
    }
    if (d.vflip) y = size - 1 - y;
    if (d.hflip) x = size - 1 - x;
    return {y, x};
  }
};

Tensor<float> transform_planar(const Tensor<float>& img, const CoordMap& m) {
  const int C = img.dim(0), S = img.dim(1);
  Tensor<float> out(img.shape);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        auto [sy, sx] = m.source(y, x);
        out[(static_cast<int64_t>(c) * S + y) * S + x] =
            img[(static_cast<int64_t>(c) * S + sy) * S + sx];
      }
  return out;
}

std::vector<uint8_t> transform_mask(const std::vector<uint8_t>& mask, const CoordMap& m) {
  const int S = m.size;
  std::vector<uint8_t> out(mask.size());
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      auto [sy, sx] = m.source(y, x);
      out[static_cast<size_t>(y) * S + x] = mask[static_cast<size_t>(sy) * S + sx];
    }
  return out;
}

}  // namespace

BiTemporalTile apply_augment(const BiTemporalTile& tile, const AugmentDraw& d) {
  if (tile.height() != tile.width()) data_error("augment: tiles must be square");
  CoordMap m{tile.height(), d};
  BiTemporalTile out;
  out.name = tile.name;
  out.t1 = transform_planar(tile.t1, m);
  out.t2 = transform_planar(tile.t2, m);
  if (tile.has_mask()) out.mask = transform_mask(tile.mask, m);
  return out;
}

BiTemporalTile augment(const BiTemporalTile& tile, Rng& rng) {
  if (!tile.has_mask()) data_error("augment: tile has no mask (training data only)");
  return apply_augment(tile, draw_augment(rng));
}

}  // namespace stnet
