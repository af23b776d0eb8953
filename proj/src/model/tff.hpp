#pragma once

#include "model/layers.hpp"

namespace stnet {

// R1 - R2, element-wise and signed.
template <typename T>
Tensor<T> coarse_difference(const Tensor<T>& r1, const Tensor<T>& r2) {
  check_same_shape(r1, r2, "coarse_difference");
  Tensor<T> out(r1.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = r1[i] - r2[i];
  return out;
}

// 3x3 depth-wise + 1x1 point-wise convolution, batchnorm, relu.
template <typename T>
struct DsConvBlock {
  Conv2d<T> dw, pw;
  BatchNorm2d<T> bn;

  DsConvBlock() = default;
  DsConvBlock(int in_c, int out_c, Rng& rng) {
    dw = Conv2d<T>(in_c, in_c, 3, 1, 1, in_c, true, rng);
    pw = Conv2d<T>(in_c, out_c, 1, 1, 0, 1, true, rng);
    bn = BatchNorm2d<T>(out_c);
  }

  ad::NodeP<T> operator()(ParamBind<T>& pb, ad::NodeP<T> x) {
    return ad::relu(bn(pb, pw(pb, dw(pb, x))));
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    dw.reg(p + ".dw", params);
    pw.reg(p + ".pw", params);
    bn.reg(p + ".bn", params, buffers);
  }
};

// Temporal feature fusion; cross-temporal gating over same-scale bi-temporal
// features. The branch dsconv and the gate conv are shared between the two
// temporal streams, so equal inputs produce bitwise-equal gates.
template <typename T>
struct TffBlock {
  int channels = 0;
  DsConvBlock<T> fuse_in;   // psi applied to (R_t (+) R_c), both branches
  Conv2d<T> gate;           // phi, 1x1, sigmoid follows
  DsConvBlock<T> fuse_out;  // psi over the gated concatenation

  TffBlock() = default;
  TffBlock(int c, Rng& rng) : channels(c) {
    fuse_in = DsConvBlock<T>(2 * c, c, rng);
    gate = Conv2d<T>(c, c, 1, 1, 0, 1, true, rng);
    // neutral gates (0.5) at init; the gating signal phases in as phi trains
    gate.w.zero();
    fuse_out = DsConvBlock<T>(2 * c, c, rng);
  }

  struct Out {
    ad::NodeP<T> rt;      // refined change representation
    ad::NodeP<T> w1, w2;  // gates, each in (0,1)
  };

  Out forward_full(ParamBind<T>& pb, ad::NodeP<T> r1, ad::NodeP<T> r2) {
    if (r1->value.dim(1) != channels)
      data_error("tff: expected " + std::to_string(channels) + " channels, got " +
                 std::to_string(r1->value.dim(1)));
    check_same_shape(r1->value, r2->value, "tff");
    auto rc = ad::sub(r1, r2);
    auto rc1 = fuse_in(pb, ad::concat_channels<T>({r1, rc}));
    auto rc2 = fuse_in(pb, ad::concat_channels<T>({r2, rc}));
    auto w1 = ad::sigmoid(gate(pb, rc1));
    auto w2 = ad::sigmoid(gate(pb, rc2));
    auto rt = fuse_out(pb, ad::concat_channels<T>({ad::mul(w1, r1), ad::mul(w2, r2)}));
    return {rt, w1, w2};
  }

  ad::NodeP<T> forward(ParamBind<T>& pb, ad::NodeP<T> r1, ad::NodeP<T> r2) {
    return forward_full(pb, r1, r2).rt;
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    fuse_in.reg(p + ".fuse_in", params, buffers);
    gate.reg(p + ".gate", params);
    fuse_out.reg(p + ".fuse_out", params, buffers);
  }
};

// Convenience wrapper over plain tensors: single sample C x h x w.
template <typename T>
Tensor<T> tff_forward(TffBlock<T>& block, const Tensor<T>& r1, const Tensor<T>& r2,
                      bool train = true) {
  if (r1.ndim() != 3) data_error("tff_forward: expected CxHxW input");
  check_same_shape(r1, r2, "tff_forward");
  Tensor<T> b1({1, r1.dim(0), r1.dim(1), r1.dim(2)}), b2 = Tensor<T>({1, r2.dim(0), r2.dim(1), r2.dim(2)});
  b1.data = r1.data;
  b2.data = r2.data;
  ParamBind<T> pb;
  pb.train = train;
  auto out = block.forward(pb, ad::make_leaf(std::move(b1), false), ad::make_leaf(std::move(b2), false));
  Tensor<T> t({out->value.dim(1), out->value.dim(2), out->value.dim(3)});
  t.data = out->value.data;
  return t;
}

}  // namespace stnet
