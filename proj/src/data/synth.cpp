#include "data/synth.hpp"

#include <cmath>
#include <filesystem>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace stnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct FloatImage {
  int size;
  std::vector<double> data;  // planar, 3 channels

  explicit FloatImage(int s) : size(s), data(static_cast<size_t>(3) * s * s) {}
  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * size + y) * size + x];
  }
};

ImageU8 quantize(const FloatImage& f) {
  ImageU8 img(f.size, f.size, 3);
  for (int y = 0; y < f.size; ++y)
    for (int x = 0; x < f.size; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = f.data[(static_cast<size_t>(c) * f.size + y) * f.size + x];
        v = std::min(1.0, std::max(0.0, v));
        img.at(y, x, c) = static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

// illumination shift plus speckle, clamped to [0,1]. The brightness offset is
// drawn per channel (white-balance drift); contrast is shared.
void distract(FloatImage& f, Rng& rng) {
  double brightness[3];
  for (double& b : brightness) b = rng.uniform(-0.15, 0.15);
  double contrast = rng.uniform(0.9, 1.1);
  for (int c = 0; c < 3; ++c) {
    double* p = f.data.data() + static_cast<size_t>(c) * f.size * f.size;
    for (int i = 0; i < f.size * f.size; ++i)
      p[i] = (p[i] - 0.5) * contrast + 0.5 + brightness[c];
  }
  // speckle is impulsive: sparse single-pixel blips standing in for transient
  // activity; 1.5% of pixels bumped by 0.12..0.20 keeps the aggregate
  // per-pixel deviation at 2% of the dynamic range
  for (int i = 0; i < f.size * f.size; ++i) {
    bool hit = rng.uniform() < 0.015;
    double bump = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.12, 0.20);
    if (hit)
      for (int c = 0; c < 3; ++c) f.data[static_cast<size_t>(c) * f.size * f.size + i] += bump;
  }
  for (auto& v : f.data) v = std::min(1.0, std::max(0.0, v));
}

SynthSample make_sample(uint64_t seed, uint64_t index, int size, double change_rate) {
  Rng rng(mix_seed(seed, index));

  double base[3];
  for (double& b : base) b = rng.uniform(0.25, 0.65);

  struct Wave {
    double amp, kx, ky, phase;
  };
  std::vector<Wave> waves;
  int n_waves = rng.uniform_int(3, 5);
  for (int w = 0; w < n_waves; ++w) {
    double amp = rng.uniform(0.02, 0.07);
    double theta = rng.uniform(0.0, kPi);
    double freq = rng.uniform(1.0, 4.0);
    double phase = rng.uniform(0.0, 2 * kPi);
    waves.push_back({amp, 2 * kPi * freq * std::cos(theta) / size,
                     2 * kPi * freq * std::sin(theta) / size, phase});
  }
  double wscale[3];
  for (double& ws : wscale) ws = rng.uniform(0.7, 1.3);

  FloatImage f1(size), f2(size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double t = 0;
      for (const auto& w : waves) t += w.amp * std::cos(w.kx * x + w.ky * y + w.phase);
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + wscale[c] * t;
        f1.at(c, y, x) = v;
        f2.at(c, y, x) = v;
      }
    }

  SynthSample sample;
  sample.mask.assign(static_cast<size_t>(size) * size, 0);

  int n_shapes = rng.uniform_int(1, 4);
  for (int s = 0; s < n_shapes; ++s) {
    SynthShape shape;
    shape.removed = rng.coin();
    shape.ellipse = rng.coin();
    double area = change_rate * size * size / 2.5 * rng.uniform(0.55, 1.45);
    double aspect = rng.uniform(0.5, 2.0);
    double w = std::sqrt(area * aspect), h = area / w;
    shape.half_w = w / 2;
    shape.half_h = h / 2;
    if (shape.ellipse) {
      // keep the area: pi * hw * hh == w * h
      shape.half_w *= 2.0 / std::sqrt(kPi);
      shape.half_h *= 2.0 / std::sqrt(kPi);
    }
    shape.half_w = std::min(std::max(shape.half_w, 1.5), size / 2.0 - 1.0);
    shape.half_h = std::min(std::max(shape.half_h, 1.5), size / 2.0 - 1.0);
    shape.cx = rng.uniform(shape.half_w, size - 1 - shape.half_w);
    shape.cy = rng.uniform(shape.half_h, size - 1 - shape.half_h);

    double sign = rng.coin() ? 1.0 : -1.0;
    double color[3];
    for (int c = 0; c < 3; ++c) color[c] = base[c] + sign * rng.uniform(0.12, 0.32);

    FloatImage& target = shape.removed ? f1 : f2;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (shape.contains(x, y)) {
          for (int c = 0; c < 3; ++c) target.at(c, y, x) = color[c];
          sample.mask[static_cast<size_t>(y) * size + x] = 1;
        }
    sample.shapes.push_back(shape);
  }

  distract(f1, rng);
  distract(f2, rng);
  sample.t1 = quantize(f1);
  sample.t2 = quantize(f2);
  return sample;
}

}  // namespace

std::vector<SynthSample> synth_generate(uint64_t seed, int n, int size, double change_rate) {
  if (size <= 0 || size % 32 != 0) usage_error("synth: size must be a positive multiple of 32");
  if (change_rate <= 0 || change_rate >= 1) usage_error("synth: change rate must be in (0,1)");
  if (n <= 0) usage_error("synth: sample count must be positive");
  std::vector<SynthSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(make_sample(seed, static_cast<uint64_t>(i), size, change_rate));
  return out;
}

SynthSplitSizes synth_split_sizes(int n) {
  SynthSplitSizes s;
  s.train = n * 70 / 100;
  s.val = n * 15 / 100;
  s.test = n - s.train - s.val;
  return s;
}

void write_synth_dataset(const std::string& out_dir, uint64_t seed, int n, int size,
                         double change_rate) {
  auto samples = synth_generate(seed, n, size, change_rate);
  SynthSplitSizes sizes = synth_split_sizes(n);
  for (const char* split : {"train", "val", "test"})
    for (const char* sub : {"A", "B", "label"})
      fs::create_directories(fs::path(out_dir) / split / sub);

  for (int i = 0; i < n; ++i) {
    const char* split = i < sizes.train ? "train" : (i < sizes.train + sizes.val ? "val" : "test");
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", i);
    fs::path base = fs::path(out_dir) / split;
    write_image((base / "A" / (std::string(name) + ".pnm")).string(), samples[static_cast<size_t>(i)].t1);
    write_image((base / "B" / (std::string(name) + ".pnm")).string(), samples[static_cast<size_t>(i)].t2);
    ImageU8 label(size, size, 1);
    for (size_t p = 0; p < label.data.size(); ++p)
      label.data[p] = samples[static_cast<size_t>(i)].mask[p] ? 255 : 0;
    write_image((base / "label" / (std::string(name) + ".pnm")).string(), label);
  }
}

}  // namespace stnet
