#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "model/decoder.hpp"
#include "model/encoder.hpp"
#include "model/sff.hpp"
#include "model/tff.hpp"

namespace stnet {

enum class Variant { Base, BaseTff, BaseSff, Full };

inline Variant variant_from_string(const std::string& s) {
  if (s == "base") return Variant::Base;
  if (s == "base+tff") return Variant::BaseTff;
  if (s == "base+sff") return Variant::BaseSff;
  if (s == "full") return Variant::Full;
  usage_error("unknown variant '" + s + "' (expected base, base+tff, base+sff, full)");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Base: return "base";
    case Variant::BaseTff: return "base+tff";
    case Variant::BaseSff: return "base+sff";
    case Variant::Full: return "full";
  }
  return "?";
}

inline bool variant_has_tff(Variant v) { return v == Variant::BaseTff || v == Variant::Full; }
inline bool variant_has_sff(Variant v) { return v == Variant::BaseSff || v == Variant::Full; }

struct ModelConfig {
  EncoderConfig encoder;
  Variant variant = Variant::Full;
  int decoder_width = 64;
  int cam_reduction = 16;
  SffConfig sff;

  void validate() const {
    encoder.validate();
    sff.validate();
    if (decoder_width <= 0) usage_error("decoder: width must be positive");
    if (cam_reduction <= 0 || (4 * decoder_width) % cam_reduction != 0)
      usage_error("decoder: cam reduction must divide 4x width");
  }
};

// Ablation fusion: concat(R1, R2, R1-R2) -> 1x1 conv, batchnorm, relu.
template <typename T>
struct BaseFusion {
  int channels = 0;
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  BaseFusion() = default;
  BaseFusion(int c, Rng& rng) : channels(c) {
    conv = Conv2d<T>(3 * c, c, 1, 1, 0, 1, true, rng);
    bn = BatchNorm2d<T>(c);
  }

  ad::NodeP<T> forward(ParamBind<T>& pb, ad::NodeP<T> r1, ad::NodeP<T> r2) {
    auto rc = ad::sub(r1, r2);
    return ad::relu(bn(pb, conv(pb, ad::concat_channels<T>({r1, r2, rc}))));
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    conv.reg(p + ".conv", params);
    bn.reg(p + ".bn", params, buffers);
  }
};

template <typename T>
struct StNet {
  ModelConfig cfg;
  ResNetEncoder<T> encoder;
  std::vector<TffBlock<T>> tff;
  std::vector<BaseFusion<T>> base_fuse;
  std::vector<SffBlock<T>> sff;  // scales 0..2, guided by scale 3
  Decoder<T> decoder;
  std::vector<ParamRef<T>> params;
  std::vector<BufferRef<T>> buffers;

  StNet() = default;
  StNet(const ModelConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    cfg.validate();
    Rng rng(seed);
    encoder = ResNetEncoder<T>(cfg.encoder, rng);
    const auto ch = encoder.channels;
    if (variant_has_tff(cfg.variant)) {
      for (int i = 0; i < 4; ++i) tff.emplace_back(ch[static_cast<size_t>(i)], rng);
    } else {
      for (int i = 0; i < 4; ++i) base_fuse.emplace_back(ch[static_cast<size_t>(i)], rng);
    }
    if (variant_has_sff(cfg.variant)) {
      for (int i = 0; i < 3; ++i)
        sff.emplace_back(ch[static_cast<size_t>(i)], ch[3], cfg.sff, rng);
    }
    decoder = Decoder<T>(ch, cfg.decoder_width, cfg.cam_reduction, rng);
    encoder.reg("encoder", params, buffers);
    for (size_t i = 0; i < tff.size(); ++i)
      tff[i].reg("tff" + std::to_string(i), params, buffers);
    for (size_t i = 0; i < base_fuse.size(); ++i)
      base_fuse[i].reg("fuse" + std::to_string(i), params, buffers);
    for (size_t i = 0; i < sff.size(); ++i) sff[i].reg("sff" + std::to_string(i), params);
    decoder.reg("decoder", params, buffers);
  }

  // t1, t2 {N,3,H,W} -> logits {N,2,H,W}
  ad::NodeP<T> forward(ParamBind<T>& pb, ad::NodeP<T> t1, ad::NodeP<T> t2) {
    if (t1->value.shape != t2->value.shape)
      data_error("co-registration error: image shapes " + shape_str(t1->value.shape) + " vs " +
                 shape_str(t2->value.shape));
    const int H = t1->value.dim(2), W = t1->value.dim(3);
    auto p1 = encoder.forward(pb, t1);
    auto p2 = encoder.forward(pb, t2);
    std::array<ad::NodeP<T>, 4> reps;
    for (int i = 0; i < 4; ++i) {
      auto a = p1[static_cast<size_t>(i)], b = p2[static_cast<size_t>(i)];
      reps[static_cast<size_t>(i)] = variant_has_tff(cfg.variant)
                                         ? tff[static_cast<size_t>(i)].forward(pb, a, b)
                                         : base_fuse[static_cast<size_t>(i)].forward(pb, a, b);
    }
    if (variant_has_sff(cfg.variant)) {
      auto high = reps[3];
      for (int i = 0; i < 3; ++i)
        reps[static_cast<size_t>(i)] = sff[static_cast<size_t>(i)].forward(pb, reps[static_cast<size_t>(i)], high);
    }
    return decoder.forward(pb, reps, H, W);
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.value->numel();
    return n;
  }
};

template <typename T>
std::unique_ptr<StNet<T>> assemble_model(const ModelConfig& cfg, uint64_t seed) {
  return std::make_unique<StNet<T>>(cfg, seed);
}

}  // namespace stnet
