#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stnet {

// Streaming confusion tallies over the changed (positive) class.
// merge is element-wise addition, so shards combine in any order.
struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  uint64_t total() const { return tp + fp + fn + tn; }
};

struct Scores {
  double f1 = 0, precision = 0, recall = 0, iou = 0, oa = 0;
};

ConfusionCounts accumulate(ConfusionCounts c, const std::vector<uint8_t>& pred,
                           const std::vector<uint8_t>& gt);

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b);

// Zero-denominator policy: a metric whose denominator vanishes is 1 when
// tp+fp+fn == 0 (nothing to find, nothing predicted), 0 otherwise.
Scores finalize(const ConfusionCounts& c);

// flat report, one "key: value" line per metric, 6 decimal places
std::string scores_to_text(const Scores& s);
void write_scores(const std::string& path, const Scores& s);

// TP white, TN black, FP red, FN green; interleaved RGB
std::vector<uint8_t> overlay_rgb(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);

}  // namespace stnet
