#include "profile/profiler.hpp"

#include <cstdio>
#include <sstream>

namespace stnet {

namespace {

struct Walk {
  ProfileReport& r;
  std::string module;

  void add(const std::string& category, int64_t flops) {
    r.flops_total += flops;
    r.flops_by_module[module] += flops;
    r.flops_by_category[category] += flops;
  }

  void conv(int k, int cin, int cout, int groups, int64_t oh, int64_t ow) {
    add("conv", conv_flops(k, cin, cout, groups, oh, ow));
  }
  // spatial-size-independent work (the CAM gate path)
  void linear_global(int in_f, int out_f) { add("global", 2LL * in_f * out_f); }
  void elementwise_global(int64_t n) { add("global", n); }
  void elementwise(int64_t n) { add("elementwise", n); }
  void upsample(int64_t out_numel) { add("elementwise", 7 * out_numel); }
  void maxpool(int k, int64_t out_numel) { add("elementwise", static_cast<int64_t>(k) * k * out_numel); }
  void attention(int64_t n_q, int64_t n_kv, int d) { add("attention", attention_flops(n_q, n_kv, d)); }

  // depthwise 3x3 + pointwise + bn + relu
  void dsconv(int cin, int cout, int64_t hw) {
    conv(3, cin, cin, cin, hw, 1);
    conv(1, cin, cout, 1, hw, 1);
    elementwise(2 * cout * hw);  // bn + relu
  }
};

}  // namespace

ProfileReport profile_model(const ModelConfig& cfg, int in_h, int in_w) {
  cfg.validate();
  if (in_h <= 0 || in_w <= 0 || in_h % 32 != 0 || in_w % 32 != 0)
    data_error("profile: input " + std::to_string(in_w) + "x" + std::to_string(in_h) +
               " is incompatible with the model (sides must be positive multiples of 32)");

  ProfileReport r;
  r.in_h = in_h;
  r.in_w = in_w;

  // exact parameter count from a real instantiation
  StNet<float> model(cfg, 0);
  r.params_total = model.param_count();
  for (const auto& p : model.params) {
    std::string prefix = p.name.substr(0, p.name.find('.'));
    std::string module;
    if (prefix == "encoder") module = "backbone";
    else if (prefix.rfind("tff", 0) == 0 || prefix.rfind("fuse", 0) == 0) module = "temporal_fusion";
    else if (prefix.rfind("sff", 0) == 0) module = "spatial_fusion";
    else module = "decoder";
    r.params_by_module[module] += p.value->numel();
  }

  const auto ch = cfg.encoder.scaled_channels();
  const int64_t h[4] = {in_h / 4, in_h / 8, in_h / 16, in_h / 32};
  const int64_t w[4] = {in_w / 4, in_w / 8, in_w / 16, in_w / 32};

  // ---- backbone, once per temporal stream
  {
    Walk bk{r, "backbone"};
    for (int stream = 0; stream < 2; ++stream) {
      int64_t sh = in_h / 2, sw = in_w / 2;
      bk.conv(7, 3, ch[0], 1, sh, sw);
      bk.elementwise(2 * ch[0] * sh * sw);  // bn + relu
      bk.maxpool(3, static_cast<int64_t>(ch[0]) * h[0] * w[0]);
      int in_c = ch[0];
      for (int s = 0; s < 4; ++s) {
        const int64_t oh = h[s], ow = w[s];
        for (int blk = 0; blk < cfg.encoder.stage_blocks[static_cast<size_t>(s)]; ++blk) {
          const bool first = blk == 0;
          const int stride = (s > 0 && first) ? 2 : 1;
          bk.conv(3, in_c, ch[static_cast<size_t>(s)], 1, oh, ow);
          bk.elementwise(2 * ch[static_cast<size_t>(s)] * oh * ow);
          bk.conv(3, ch[static_cast<size_t>(s)], ch[static_cast<size_t>(s)], 1, oh, ow);
          bk.elementwise(2 * ch[static_cast<size_t>(s)] * oh * ow);
          if (stride != 1 || in_c != ch[static_cast<size_t>(s)]) {
            bk.conv(1, in_c, ch[static_cast<size_t>(s)], 1, oh, ow);
            bk.elementwise(ch[static_cast<size_t>(s)] * oh * ow);
          }
          bk.elementwise(2 * ch[static_cast<size_t>(s)] * oh * ow);  // residual add + relu
          in_c = ch[static_cast<size_t>(s)];
        }
      }
    }
  }

  // ---- per-scale temporal fusion
  {
    Walk tf{r, "temporal_fusion"};
    for (int s = 0; s < 4; ++s) {
      const int c = ch[static_cast<size_t>(s)];
      const int64_t hw = h[s] * w[s];
      tf.elementwise(c * hw);  // subtraction
      if (variant_has_tff(cfg.variant)) {
        tf.dsconv(2 * c, c, hw);  // fuse_in on branch 1
        tf.dsconv(2 * c, c, hw);  // fuse_in on branch 2 (shared weights, run twice)
        tf.conv(1, c, c, 1, hw, 1);
        tf.conv(1, c, c, 1, hw, 1);
        tf.elementwise(4 * c * hw);  // two sigmoids, two gatings
        tf.dsconv(2 * c, c, hw);     // fuse_out
      } else {
        tf.conv(1, 3 * c, c, 1, hw, 1);
        tf.elementwise(2 * c * hw);  // bn + relu
      }
    }
  }

  // ---- cross-scale attention at the three shallow scales
  if (variant_has_sff(cfg.variant)) {
    Walk sf{r, "spatial_fusion"};
    const int c_high = ch[3];
    for (int s = 0; s < 3; ++s) {
      const int c_low = ch[static_cast<size_t>(s)];
      const int d = cfg.sff.dim > 0 ? cfg.sff.dim : c_low;
      const int64_t hw = h[s] * w[s];
      const int pool = cfg.sff.key_downsample;
      const int64_t hw_kv = ((h[s] + pool - 1) / pool) * ((w[s] + pool - 1) / pool);
      sf.upsample(c_high * hw);
      sf.conv(1, c_low + c_high, d, 1, hw, 1);  // queries
      if (pool > 1) sf.elementwise((c_low + c_high + c_low) * hw);
      sf.conv(1, c_low + c_high, d, 1, hw_kv, 1);  // keys
      sf.conv(1, c_low, d, 1, hw_kv, 1);           // values
      sf.attention(hw, hw_kv, d);
      sf.conv(1, d, c_low, 1, hw, 1);  // output projection
      sf.elementwise(c_low * hw);      // residual add
    }
  }

  // ---- decoder
  {
    Walk dc{r, "decoder"};
    const int d = cfg.decoder_width;
    const int64_t hw4 = h[0] * w[0];
    for (int s = 0; s < 4; ++s) {
      dc.conv(1, ch[static_cast<size_t>(s)], d, 1, h[s], w[s]);
      dc.elementwise(2 * d * h[s] * w[s]);  // bn + relu
      if (s > 0) dc.upsample(d * hw4);
    }
    const int cat = 4 * d;
    dc.elementwise(cat * hw4);  // global average pool reads every element
    dc.linear_global(cat, cat / cfg.cam_reduction);
    dc.elementwise_global(cat / cfg.cam_reduction);
    dc.linear_global(cat / cfg.cam_reduction, cat);
    dc.elementwise_global(cat);
    dc.elementwise(cat * hw4);  // channel gating
    dc.conv(1, cat, 2, 1, h[0], w[0]);
    dc.upsample(2LL * in_h * in_w);
  }

  return r;
}

std::string ProfileReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  os << "input_shape: " << in_c << "x" << in_h << "x" << in_w << "\n";
  os << "params_total: " << params_total << "\n";
  std::snprintf(buf, sizeof(buf), "params_total_m: %.3f\n", params_total / 1e6);
  os << buf;
  os << "params_by_module:\n";
  for (const auto& [k, v] : params_by_module) os << "  " << k << ": " << v << "\n";
  os << "flops_total: " << flops_total << "  # multiply-accumulate = 2 ops\n";
  os << "flops_total_macs: " << flops_total_macs() << "  # multiply-accumulate = 1 op\n";
  std::snprintf(buf, sizeof(buf), "flops_total_g: %.3f\nflops_total_macs_g: %.3f\n",
                flops_total / 1e9, flops_total_macs() / 1e9);
  os << buf;
  os << "flops_by_module:\n";
  for (const auto& [k, v] : flops_by_module) os << "  " << k << ": " << v << "\n";
  os << "flops_by_category:\n";
  for (const auto& [k, v] : flops_by_category) os << "  " << k << ": " << v << "\n";
  return os.str();
}

}  // namespace stnet
