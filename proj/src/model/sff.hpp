#pragma once

#include "model/layers.hpp"

namespace stnet {

struct SffConfig {
  int dim = 0;             // attention dimension d; 0 means "use C_low"
  int key_downsample = 1;  // average-pool factor on key/value tokens
  int64_t token_limit = 4096;

  void validate() const {
    if (dim < 0) usage_error("sff: dim must be >= 0");
    if (key_downsample < 1) usage_error("sff: key_downsample must be >= 1");
    if (token_limit < 1) usage_error("sff: token_limit must be >= 1");
  }
};

// Q {B,L,d} x K {B,M,d} -> softmax(QK^T / sqrt(d)) V, V {B,M,dv}.
// Row-stochastic attention by construction.
template <typename T>
ad::NodeP<T> scaled_dot_attention_node(ad::NodeP<T> q, ad::NodeP<T> k, ad::NodeP<T> v) {
  const int d = q->value.dim(2);
  if (q->value.dim(1) == 0 || k->value.dim(1) == 0) data_error("attention: zero tokens");
  if (!all_finite(q->value) || !all_finite(k->value) || !all_finite(v->value))
    numeric_error("attention: non-finite input");
  auto scores = ad::scale(ad::bmm_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  auto alpha = ad::softmax_lastdim(scores);
  return ad::bmm(alpha, v);
}

// Plain-matrix surface: Q {N,d}, K {N,d}, V {N,dv} for one instance.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) data_error("attention: expected N x d matrices");
  if (q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0)) data_error("attention: row count mismatch");
  if (q.dim(0) == 0) data_error("attention: zero tokens");
  if (q.dim(1) != k.dim(1) || q.dim(1) <= 0) data_error("attention: bad projection dim");
  auto lift = [](const Tensor<T>& m) {
    Tensor<T> b({1, m.dim(0), m.dim(1)});
    b.data = m.data;
    return ad::make_leaf(std::move(b), false);
  };
  auto z = scaled_dot_attention_node(lift(q), lift(k), lift(v));
  Tensor<T> out({z->value.dim(1), z->value.dim(2)});
  out.data = z->value.data;
  return out;
}

// Plain-tensor bilinear upsample (pixel-center convention), channels first.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int target_h, int target_w) {
  if (x.ndim() != 3) data_error("upsample: expected CxHxW");
  Tensor<T> b({1, x.dim(0), x.dim(1), x.dim(2)});
  b.data = x.data;
  auto out = ad::upsample_bilinear(ad::make_leaf(std::move(b), false), target_h, target_w);
  Tensor<T> t({out->value.dim(1), out->value.dim(2), out->value.dim(3)});
  t.data = out->value.data;
  return t;
}

// Spatial feature fusion: cross-scale attention where Q and K come from the
// concatenation of the upsampled deepest-scale representation with the local
// one, V from the local one; residual output keeps the local shape.
template <typename T>
struct SffBlock {
  int c_low = 0, c_high = 0, d = 0;
  int key_downsample = 1;
  int64_t token_limit = 4096;
  Conv2d<T> wq, wk, wv, wo;  // all 1x1

  SffBlock() = default;
  SffBlock(int c_low_, int c_high_, const SffConfig& cfg, Rng& rng)
      : c_low(c_low_), c_high(c_high_), d(cfg.dim > 0 ? cfg.dim : c_low_),
        key_downsample(cfg.key_downsample), token_limit(cfg.token_limit) {
    wq = Conv2d<T>(c_low + c_high, d, 1, 1, 0, 1, true, rng);
    wk = Conv2d<T>(c_low + c_high, d, 1, 1, 0, 1, true, rng);
    wv = Conv2d<T>(c_low, d, 1, 1, 0, 1, true, rng);
    wo = Conv2d<T>(d, c_low, 1, 1, 0, 1, true, rng);
    // identity at init: the residual update phases in as wo trains
    wo.w.zero();
  }

  ad::NodeP<T> forward(ParamBind<T>& pb, ad::NodeP<T> low, ad::NodeP<T> high) {
    const int h = low->value.dim(2), w = low->value.dim(3);
    if (low->value.dim(1) != c_low || high->value.dim(1) != c_high)
      data_error("sff: channel mismatch");
    if (high->value.dim(2) > h || high->value.dim(3) > w)
      data_error("sff: high-level input larger than low-level");
    auto up = ad::upsample_bilinear(high, h, w);
    auto g = ad::concat_channels<T>({up, low});
    auto g_kv = key_downsample > 1 ? ad::avgpool_window(g, key_downsample) : g;
    auto v_src = key_downsample > 1 ? ad::avgpool_window(low, key_downsample) : low;
    const int64_t n_kv = static_cast<int64_t>(g_kv->value.dim(2)) * g_kv->value.dim(3);
    if (n_kv > token_limit)
      data_error("sff: " + std::to_string(n_kv) + " key/value tokens exceed the limit of " +
                 std::to_string(token_limit) +
                 "; reduce resolution or increase sff.key_downsample");
    auto q = ad::tokens_from_nchw(wq(pb, g));
    auto k = ad::tokens_from_nchw(wk(pb, g_kv));
    auto v = ad::tokens_from_nchw(wv(pb, v_src));
    auto z = scaled_dot_attention_node(q, k, v);
    auto update = wo(pb, ad::nchw_from_tokens(z, h, w));
    return ad::add(low, update);
  }

  void reg(const std::string& p, std::vector<ParamRef<T>>& params) {
    wq.reg(p + ".wq", params);
    wk.reg(p + ".wk", params);
    wv.reg(p + ".wv", params);
    wo.reg(p + ".wo", params);
  }
};

// Plain-tensor surface: low C_low x h x w, high C_high x h' x w'.
template <typename T>
Tensor<T> sff_forward(SffBlock<T>& block, const Tensor<T>& low, const Tensor<T>& high) {
  if (low.ndim() != 3 || high.ndim() != 3) data_error("sff_forward: expected CxHxW inputs");
  Tensor<T> bl({1, low.dim(0), low.dim(1), low.dim(2)});
  bl.data = low.data;
  Tensor<T> bh({1, high.dim(0), high.dim(1), high.dim(2)});
  bh.data = high.data;
  ParamBind<T> pb;
  auto out = block.forward(pb, ad::make_leaf(std::move(bl), false), ad::make_leaf(std::move(bh), false));
  Tensor<T> t({out->value.dim(1), out->value.dim(2), out->value.dim(3)});
  t.data = out->value.data;
  return t;
}

}  // namespace stnet
