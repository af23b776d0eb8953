#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "model/layers.hpp"

namespace stnet {

// Squeeze-excitation style channel attention: global average pool ->
// fc1 -> relu -> fc2 -> sigmoid, gate broadcast over space.
template <typename T>
struct CamBlock {
  int c = 0, r = 16;
  Linear<T> fc1, fc2;

  CamBlock() = default;
  CamBlock(int c_, int r_, Rng& rng) : c(c_), r(r_) {
    if (r <= 0 || c % r != 0) usage_error("cam: reduction must divide the channel count");
    fc1 = Linear<T>(c, c / r, true, rng);
    fc2 = Linear<T>(c / r, c, true, rng);
  }

  ad::NodeP<T> operator()(ParamBind<T>& pb, ad::NodeP<T> x) {
    if (x->value.dim(1) != c) data_error("cam: channel mismatch");
    auto g = ad::sigmoid(fc2(pb, ad::relu(fc1(pb, ad::global_avgpool(x)))));
    return ad::mul_channel(x, g);
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params) {
    fc1.reg(p + ".fc1", params);
    fc2.reg(p + ".fc2", params);
  }
};

template <typename T>
Tensor<T> cam_forward(CamBlock<T>& cam, const Tensor<T>& x) {
  if (x.ndim() != 3) data_error("cam_forward: expected CxHxW");
  Tensor<T> b({1, x.dim(0), x.dim(1), x.dim(2)});
  b.data = x.data;
  ParamBind<T> pb;
  auto out = cam(pb, ad::make_leaf(std::move(b), false));
  Tensor<T> t({out->value.dim(1), out->value.dim(2), out->value.dim(3)});
  t.data = out->value.data;
  return t;
}

// Decoder: 1x1-project each scale to a common width, upsample everything to
// the stride-4 grid, concatenate, channel attention, 1x1 classify to two
// channels, then bilinear upsample to the input resolution.
template <typename T>
struct Decoder {
  int d_width = 64;
  std::array<Conv2d<T>, 4> proj;
  std::array<BatchNorm2d<T>, 4> proj_bn;
  CamBlock<T> cam;
  Conv2d<T> classifier;

  Decoder() = default;
  Decoder(const std::array<int, 4>& in_channels, int d_width_, int cam_reduction, Rng& rng)
      : d_width(d_width_) {
    for (int i = 0; i < 4; ++i) {
      proj[static_cast<size_t>(i)] =
          Conv2d<T>(in_channels[static_cast<size_t>(i)], d_width, 1, 1, 0, 1, false, rng);
      proj_bn[static_cast<size_t>(i)] = BatchNorm2d<T>(d_width);
    }
    cam = CamBlock<T>(4 * d_width, cam_reduction, rng);
    classifier = Conv2d<T>(4 * d_width, 2, 1, 1, 0, 1, true, rng);
  }

  // reps at strides 4/8/16/32 of an H x W input -> logits {N,2,H,W}
  ad::NodeP<T> forward(ParamBind<T>& pb, const std::array<ad::NodeP<T>, 4>& reps, int out_h,
                       int out_w) {
    for (const auto& r : reps)
      if (!r) data_error("decode: missing scale");
    const int h4 = reps[0]->value.dim(2), w4 = reps[0]->value.dim(3);
    std::vector<ad::NodeP<T>> up;
    for (int i = 0; i < 4; ++i) {
      auto p = ad::relu(
          proj_bn[static_cast<size_t>(i)](pb, proj[static_cast<size_t>(i)](pb, reps[static_cast<size_t>(i)])));
      up.push_back(i == 0 ? p : ad::upsample_bilinear(p, h4, w4));
    }
    auto fused = cam(pb, ad::concat_channels<T>(up));
    auto logits = classifier(pb, fused);
    return ad::upsample_bilinear(logits, out_h, out_w);
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    for (int i = 0; i < 4; ++i) {
      proj[static_cast<size_t>(i)].reg(p + ".proj" + std::to_string(i), params);
      proj_bn[static_cast<size_t>(i)].reg(p + ".proj_bn" + std::to_string(i), params, buffers);
    }
    cam.reg(p + ".cam", params);
    classifier.reg(p + ".classifier", params);
  }
};

// Channel-wise softmax of 2 x H x W logits (or N x 2 x H x W batches).
template <typename T>
Tensor<T> to_probability(const Tensor<T>& logits) {
  if (!all_finite(logits)) numeric_error("to_probability: non-finite logits");
  const bool batched = logits.ndim() == 4;
  if (!batched && logits.ndim() != 3) data_error("to_probability: expected 2xHxW logits");
  const int C = batched ? logits.dim(1) : logits.dim(0);
  const int64_t plane = batched ? static_cast<int64_t>(logits.dim(2)) * logits.dim(3)
                                : static_cast<int64_t>(logits.dim(1)) * logits.dim(2);
  const int N = batched ? logits.dim(0) : 1;
  Tensor<T> out(logits.shape);
  for (int n = 0; n < N; ++n) {
    const T* xp = logits.ptr() + static_cast<int64_t>(n) * C * plane;
    T* op = out.ptr() + static_cast<int64_t>(n) * C * plane;
    for (int64_t i = 0; i < plane; ++i) {
      T mx = xp[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c * plane + i]);
      T s = T(0);
      for (int c = 0; c < C; ++c) {
        T e = std::exp(xp[c * plane + i] - mx);
        op[c * plane + i] = e;
        s += e;
      }
      for (int c = 0; c < C; ++c) op[c * plane + i] /= s;
    }
  }
  return out;
}

// changed iff p_changed > p_unchanged; ties resolve to unchanged
template <typename T>
std::vector<uint8_t> binarize(const Tensor<T>& prob) {
  if (prob.ndim() != 3 || prob.dim(0) != 2) data_error("binarize: expected 2xHxW probabilities");
  const int64_t plane = static_cast<int64_t>(prob.dim(1)) * prob.dim(2);
  std::vector<uint8_t> mask(static_cast<size_t>(plane));
  for (int64_t i = 0; i < plane; ++i)
    mask[static_cast<size_t>(i)] = prob[plane + i] > prob[i] ? 1 : 0;
  return mask;
}

}  // namespace stnet
