#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "core/error.hpp"

namespace fs = std::filesystem;

namespace stnet {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  usage_error("unknown split '" + s + "' (expected train, val, test)");
}

std::vector<uint8_t> normalize_mask(const ImageU8& raw) {
  if (raw.c != 1) data_error("normalize_mask: expected a grayscale label");
  std::vector<uint8_t> mask(raw.data.size());
  for (size_t i = 0; i < raw.data.size(); ++i) mask[i] = raw.data[i] > 0 ? 1 : 0;
  return mask;
}

Tensor<float> standardize(const ImageU8& rgb, const ChannelStats& stats) {
  if (rgb.c != 3) data_error("standardize: expected an RGB image");
  Tensor<float> out({3, rgb.h, rgb.w});
  const int64_t plane = static_cast<int64_t>(rgb.h) * rgb.w;
  for (int ch = 0; ch < 3; ++ch) {
    const float mean = static_cast<float>(stats.mean[static_cast<size_t>(ch)]);
    const float inv = static_cast<float>(1.0 / stats.stddev[static_cast<size_t>(ch)]);
    for (int64_t i = 0; i < plane; ++i)
      out[ch * plane + i] = (rgb.data[static_cast<size_t>(i) * 3 + ch] / 255.0f - mean) * inv;
  }
  return out;
}

DatasetRoot DatasetRoot::open(const std::string& path) {
  DatasetRoot root;
  root.path_ = path;
  if (!fs::is_directory(path)) data_error("dataset root " + path + " is not a directory");

  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    fs::path base = fs::path(path) / split_dir(s);
    fs::path a = base / "A", b = base / "B", label = base / "label";
    for (const auto& d : {a, b, label})
      if (!fs::is_directory(d)) data_error("missing dataset directory " + d.string());

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(a))
      if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());

    for (const auto& n : names) {
      for (const auto& d : {b, label}) {
        if (!fs::exists(d / n)) data_error("missing counterpart file " + (d / n).string());
      }
      ImageHeader ha = read_image_header((a / n).string());
      ImageHeader hb = read_image_header((b / n).string());
      ImageHeader hl = read_image_header((label / n).string());
      if (ha.w != hb.w || ha.h != hb.h || ha.w != hl.w || ha.h != hl.h)
        data_error("co-registration error: dimensions differ across A/B/label for " + n);
    }
    root.names_[idx(s)] = std::move(names);
  }

  // per-channel standardization statistics from the train split (A and B)
  std::array<double, 3> sum{}, sumsq{};
  int64_t count = 0;
  fs::path tbase = fs::path(path) / "train";
  for (const char* sub : {"A", "B"}) {
    for (const auto& n : root.names_[idx(Split::Train)]) {
      ImageU8 img = read_image((tbase / sub / n).string());
      if (img.c != 3) data_error("expected RGB image: " + (tbase / sub / n).string());
      const int64_t pixels = static_cast<int64_t>(img.w) * img.h;
      for (int64_t i = 0; i < pixels; ++i)
        for (int ch = 0; ch < 3; ++ch) {
          double v = img.data[static_cast<size_t>(i) * 3 + ch] / 255.0;
          sum[static_cast<size_t>(ch)] += v;
          sumsq[static_cast<size_t>(ch)] += v * v;
        }
      count += pixels;
    }
  }
  if (count == 0) data_error("train split of " + path + " is empty");
  for (int ch = 0; ch < 3; ++ch) {
    double m = sum[static_cast<size_t>(ch)] / static_cast<double>(count);
    double var = sumsq[static_cast<size_t>(ch)] / static_cast<double>(count) - m * m;
    root.stats_.mean[static_cast<size_t>(ch)] = m;
    root.stats_.stddev[static_cast<size_t>(ch)] = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
  }
  return root;
}

BiTemporalTile DatasetRoot::load(Split s, size_t i) const {
  const auto& names = names_[idx(s)];
  if (i >= names.size()) data_error("tile index out of range");
  fs::path base = fs::path(path_) / split_dir(s);
  BiTemporalTile tile;
  tile.name = names[i];
  ImageU8 a = read_image((base / "A" / tile.name).string());
  ImageU8 b = read_image((base / "B" / tile.name).string());
  ImageU8 l = read_image((base / "label" / tile.name).string());
  if (a.w != b.w || a.h != b.h || a.w != l.w || a.h != l.h)
    data_error("co-registration error: dimensions differ for " + tile.name);
  tile.t1 = standardize(a, stats_);
  tile.t2 = standardize(b, stats_);
  tile.mask = normalize_mask(l);
  return tile;
}

std::vector<BiTemporalTile> DatasetRoot::load_all(Split s) const {
  std::vector<BiTemporalTile> tiles;
  tiles.reserve(count(s));
  for (size_t i = 0; i < count(s); ++i) tiles.push_back(load(s, i));
  return tiles;
}

}  // namespace stnet
