#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/image_io.hpp"

namespace stnet {

struct SynthShape {
  bool ellipse = false;
  bool removed = false;  // present in T1 only; otherwise added in T2 only
  double cx = 0, cy = 0, half_w = 0, half_h = 0;

  bool contains(int x, int y) const {
    double dx = x - cx, dy = y - cy;
    if (ellipse) {
      double u = dx / half_w, v = dy / half_h;
      return u * u + v * v <= 1.0;
    }
    return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
  }
};

struct SynthSample {
  ImageU8 t1, t2;
  std::vector<uint8_t> mask;  // 0/1, changes of interest only
  std::vector<SynthShape> shapes;
};

// Deterministic in seed. Each sample shares a textured background between the
// frames; 1..4 rectangles or ellipses are added to T2 or removed from it
// (recorded in the mask); both frames then receive independent illumination
// shifts and speckle that the mask does not record.
std::vector<SynthSample> synth_generate(uint64_t seed, int n, int size, double change_rate);

struct SynthSplitSizes {
  int train = 0, val = 0, test = 0;
};

// 70 / 15 / 15 by index order
SynthSplitSizes synth_split_sizes(int n);

void write_synth_dataset(const std::string& out_dir, uint64_t seed, int n, int size,
                         double change_rate);

}  // namespace stnet
