#pragma once

#include <array>
#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "data/image_io.hpp"

namespace stnet {

enum class Split { Train, Val, Test };

inline const char* split_dir(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s);

struct ChannelStats {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

// Co-registered pair plus optional binary mask. Images are planar {3,S,S},
// scaled to [0,1] and then standardized with the train-split statistics.
struct BiTemporalTile {
  std::string name;
  Tensor<float> t1, t2;
  std::vector<uint8_t> mask;

  int height() const { return t1.dim(1); }
  int width() const { return t1.dim(2); }
  bool has_mask() const { return !mask.empty(); }
};

// raw grayscale -> binary: any nonzero pixel is changed
std::vector<uint8_t> normalize_mask(const ImageU8& raw);

Tensor<float> standardize(const ImageU8& rgb, const ChannelStats& stats);

// root/{train,val,test}/{A,B,label}/<name>; filenames matched exactly across
// the three directories; iteration order is lexicographic by filename.
class DatasetRoot {
 public:
  static DatasetRoot open(const std::string& path);

  const std::string& path() const { return path_; }
  const ChannelStats& stats() const { return stats_; }
  size_t count(Split s) const { return names_[idx(s)].size(); }
  const std::vector<std::string>& names(Split s) const { return names_[idx(s)]; }

  BiTemporalTile load(Split s, size_t i) const;
  std::vector<BiTemporalTile> load_all(Split s) const;

 private:
  static size_t idx(Split s) { return static_cast<size_t>(s); }
  std::string path_;
  std::array<std::vector<std::string>, 3> names_;
  ChannelStats stats_;
};

}  // namespace stnet
