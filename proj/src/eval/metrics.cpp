#include "eval/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "core/error.hpp"

namespace stnet {

ConfusionCounts accumulate(ConfusionCounts c, const std::vector<uint8_t>& pred,
                           const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size())
    data_error("accumulate: mask sizes differ (" + std::to_string(pred.size()) + " vs " +
               std::to_string(gt.size()) + ")");
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b) {
  return {a.tp + b.tp, a.fp + b.fp, a.fn + b.fn, a.tn + b.tn};
}

Scores finalize(const ConfusionCounts& c) {
  if (c.total() == 0) data_error("finalize: empty confusion counts");
  const bool nothing = c.tp + c.fp + c.fn == 0;
  auto ratio = [&](uint64_t num, uint64_t den) {
    if (den == 0) return nothing ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Scores s;
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.recall = ratio(c.tp, c.tp + c.fn);
  s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : (nothing ? 1.0 : 0.0);
  s.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  s.oa = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return s;
}

std::string scores_to_text(const Scores& s) {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "f1: %.6f\nprecision: %.6f\nrecall: %.6f\niou: %.6f\noa: %.6f\n", s.f1,
                s.precision, s.recall, s.iou, s.oa);
  return buf;
}

void write_scores(const std::string& path, const Scores& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write report to " + path);
  out << scores_to_text(s);
}

std::vector<uint8_t> overlay_rgb(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size()) data_error("overlay: mask sizes differ");
  std::vector<uint8_t> rgb(pred.size() * 3);
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    uint8_t r = 0, gn = 0, b = 0;
    if (p && g) r = gn = b = 255;  // true positive: white
    else if (p && !g) r = 255;     // false positive: red
    else if (!p && g) gn = 255;    // false negative: green
    rgb[i * 3] = r;
    rgb[i * 3 + 1] = gn;
    rgb[i * 3 + 2] = b;
  }
  return rgb;
}

}  // namespace stnet
