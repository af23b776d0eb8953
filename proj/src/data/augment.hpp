#pragma once

#include "core/rng.hpp"
#include "data/dataset.hpp"

namespace stnet {

struct AugmentDraw {
  bool hflip = false, vflip = false;
  int quarter_turns = 0;  // 0..3
};

// Each transform fires with probability 0.5; the rotation count is uniform in
// {0,1,2,3}. Draw order is fixed (hflip, vflip, rotate?, k) so streams stay
// reproducible.
AugmentDraw draw_augment(Rng& rng);

// The identical transform is applied to t1, t2 and the mask. Training only:
// the tile must carry a mask.
BiTemporalTile augment(const BiTemporalTile& tile, Rng& rng);
BiTemporalTile apply_augment(const BiTemporalTile& tile, const AugmentDraw& d);

}  // namespace stnet
