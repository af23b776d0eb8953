#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "model/layers.hpp"

namespace stnet {

struct EncoderConfig {
  std::array<int, 4> stage_channels{64, 128, 256, 512};
  std::array<int, 4> stage_blocks{2, 2, 2, 2};
  double width_multiplier = 1.0;
  bool pretrained = false;
  std::string pretrained_path;

  void validate() const {
    for (int c : stage_channels)
      if (c <= 0) usage_error("encoder: stage channels must be positive");
    for (int b : stage_blocks)
      if (b <= 0) usage_error("encoder: stage block counts must be positive");
    if (width_multiplier <= 0) usage_error("encoder: width multiplier must be positive");
  }

  // width-scaled channels, rounded to a multiple of 8
  std::array<int, 4> scaled_channels() const {
    std::array<int, 4> out = stage_channels;
    if (width_multiplier != 1.0) {
      for (auto& c : out) {
        int scaled = static_cast<int>(std::lround(c * width_multiplier / 8.0)) * 8;
        c = std::max(8, scaled);
      }
    }
    return out;
  }
};

template <typename T>
struct BasicBlock {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  std::optional<Conv2d<T>> down;
  std::optional<BatchNorm2d<T>> down_bn;

  BasicBlock() = default;
  BasicBlock(int in_c, int out_c, int stride, Rng& rng) {
    conv1 = Conv2d<T>(in_c, out_c, 3, stride, 1, 1, false, rng);
    bn1 = BatchNorm2d<T>(out_c);
    conv2 = Conv2d<T>(out_c, out_c, 3, 1, 1, 1, false, rng);
    bn2 = BatchNorm2d<T>(out_c);
    if (stride != 1 || in_c != out_c) {
      down.emplace(in_c, out_c, 1, stride, 0, 1, false, rng);
      down_bn.emplace(out_c);
    }
  }

  ad::NodeP<T> forward(ParamBind<T>& pb, ad::NodeP<T> x) {
    auto y = ad::relu(bn1(pb, conv1(pb, x)));
    y = bn2(pb, conv2(pb, y));
    auto identity = down ? (*down_bn)(pb, (*down)(pb, x)) : x;
    return ad::relu(ad::add(y, identity));
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    conv1.reg(p + ".conv1", params);
    bn1.reg(p + ".bn1", params, buffers);
    conv2.reg(p + ".conv2", params);
    bn2.reg(p + ".bn2", params, buffers);
    if (down) {
      down->reg(p + ".down", params);
      down_bn->reg(p + ".down_bn", params, buffers);
    }
  }
};

// Hierarchical feature extractor: 7x7/2 stem + 3x3/2 maxpool, then four
// residual stages at strides 4/8/16/32. One parameter set; both temporal
// streams evaluate it, so weight sharing is structural.
template <typename T>
struct ResNetEncoder {
  EncoderConfig cfg;
  std::array<int, 4> channels{};
  Conv2d<T> stem;
  BatchNorm2d<T> stem_bn;
  std::vector<std::vector<BasicBlock<T>>> stages;

  ResNetEncoder() = default;
  ResNetEncoder(const EncoderConfig& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    channels = cfg.scaled_channels();
    stem = Conv2d<T>(3, channels[0], 7, 2, 3, 1, false, rng);
    stem_bn = BatchNorm2d<T>(channels[0]);
    int in_c = channels[0];
    for (int s = 0; s < 4; ++s) {
      std::vector<BasicBlock<T>> blocks;
      int stride = s == 0 ? 1 : 2;
      for (int b = 0; b < cfg.stage_blocks[static_cast<size_t>(s)]; ++b) {
        blocks.emplace_back(in_c, channels[static_cast<size_t>(s)], b == 0 ? stride : 1, rng);
        in_c = channels[static_cast<size_t>(s)];
      }
      stages.push_back(std::move(blocks));
    }
  }

  // x {N,3,H,W} with H, W divisible by 32 -> 4 levels at strides 4/8/16/32
  std::array<ad::NodeP<T>, 4> forward(ParamBind<T>& pb, ad::NodeP<T> x) {
    const int H = x->value.dim(2), W = x->value.dim(3);
    if (H % 32 != 0)
      data_error("input height " + std::to_string(H) + " not divisible by 32");
    if (W % 32 != 0)
      data_error("input width " + std::to_string(W) + " not divisible by 32");
    auto y = ad::maxpool2d(ad::relu(stem_bn(pb, stem(pb, x))), 3, 2, 1);
    std::array<ad::NodeP<T>, 4> levels;
    for (int s = 0; s < 4; ++s) {
      for (auto& blk : stages[static_cast<size_t>(s)]) y = blk.forward(pb, y);
      levels[static_cast<size_t>(s)] = y;
    }
    return levels;
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    stem.reg(p + ".stem", params);
    stem_bn.reg(p + ".stem_bn", params, buffers);
    for (size_t s = 0; s < stages.size(); ++s)
      for (size_t b = 0; b < stages[s].size(); ++b)
        stages[s][b].reg(p + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b),
                         params, buffers);
  }
};

// Standalone pyramid extraction over a plain {3,H,W} image (inference path).
template <typename T>
std::array<Tensor<T>, 4> extract_pyramid(ResNetEncoder<T>& enc, const Tensor<T>& image,
                                         bool train = false) {
  if (image.ndim() != 3 || image.dim(0) != 3) data_error("extract_pyramid: expected 3xHxW image");
  Tensor<T> batched({1, 3, image.dim(1), image.dim(2)});
  batched.data = image.data;
  ParamBind<T> pb;
  pb.train = train;
  auto levels = enc.forward(pb, ad::make_leaf(std::move(batched), false));
  std::array<Tensor<T>, 4> out;
  for (int i = 0; i < 4; ++i) {
    const Tensor<T>& v = levels[static_cast<size_t>(i)]->value;
    Tensor<T> t({v.dim(1), v.dim(2), v.dim(3)});
    t.data = v.data;
    out[static_cast<size_t>(i)] = std::move(t);
  }
  return out;
}

template <typename T>
std::pair<std::array<Tensor<T>, 4>, std::array<Tensor<T>, 4>> extract_bitemporal(
    ResNetEncoder<T>& enc, const Tensor<T>& t1, const Tensor<T>& t2) {
  if (t1.shape != t2.shape)
    data_error("co-registration error: T1 " + shape_str(t1.shape) + " vs T2 " +
               shape_str(t2.shape));
  return {extract_pyramid(enc, t1), extract_pyramid(enc, t2)};
}

}  // namespace stnet
