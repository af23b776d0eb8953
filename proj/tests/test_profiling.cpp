#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/rng.hpp"
#include "profile/profiler.hpp"

using namespace stnet;

namespace {

// layer-by-layer parameter summation for the default backbone, written out
// independently of the model classes
int64_t resnet18_params() {
  auto conv = [](int cin, int cout, int k) { return static_cast<int64_t>(cin) * cout * k * k; };
  auto bn = [](int c) { return 2LL * c; };
  int64_t total = conv(3, 64, 7) + bn(64);
  int chans[4] = {64, 128, 256, 512};
  int in_c = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < 2; ++b) {
      total += conv(in_c, chans[s], 3) + bn(chans[s]);
      total += conv(chans[s], chans[s], 3) + bn(chans[s]);
      if (in_c != chans[s]) total += conv(in_c, chans[s], 1) + bn(chans[s]);
      in_c = chans[s];
    }
  }
  return total;
}

}  // namespace

TEST_CASE("single-layer counting formulas") {
  Rng rng(0);
  Conv2d<float> conv(64, 2, 1, 1, 0, 1, true, rng);
  CHECK(conv.param_count() == 130);  // 64*2 weights + 2 biases

  CHECK(conv_flops(1, 64, 2, 1, 64, 64) == 1048576);
  CHECK(conv_flops(3, 16, 32, 1, 8, 8) == 2LL * 9 * 16 * 32 * 64);
  CHECK(conv_flops(3, 16, 16, 16, 8, 8) == 2LL * 9 * 1 * 16 * 64);  // depthwise
  CHECK(attention_flops(10, 10, 4) == 2 * 10 * 10 * 4 + 2 * 10 * 10 + 2 * 10 * 10 * 4);
}

TEST_CASE("default encoder parameter count matches the analytic summation") {
  ModelConfig cfg;
  ProfileReport r = profile_model(cfg, 256, 256);
  CHECK(r.params_by_module.at("backbone") == resnet18_params());
  CHECK(r.params_by_module.at("backbone") == 11176512);
}

TEST_CASE("full default model sits inside the published bands") {
  ModelConfig cfg;
  ProfileReport r = profile_model(cfg, 256, 256);
  CHECK(r.params_total > 11'700'000);
  CHECK(r.params_total < 17'500'000);
  // at least one documented convention lands in the published FLOP band
  bool mac1_in = r.flops_total_macs() > 7'700'000'000 && r.flops_total_macs() < 12'500'000'000;
  bool mac2_in = r.flops_total > 7'700'000'000 && r.flops_total < 12'500'000'000;
  CHECK((mac1_in || mac2_in));
}

TEST_CASE("profile totals equal the sum of the per-module entries") {
  ModelConfig cfg;
  cfg.encoder.width_multiplier = 0.25;
  ProfileReport r = profile_model(cfg, 64, 64);
  int64_t p = 0, f = 0;
  for (const auto& [k, v] : r.params_by_module) p += v;
  for (const auto& [k, v] : r.flops_by_module) f += v;
  CHECK(p == r.params_total);
  CHECK(f == r.flops_total);
  int64_t fc = 0;
  for (const auto& [k, v] : r.flops_by_category) fc += v;
  CHECK(fc == r.flops_total);
}

TEST_CASE("profiled parameters equal the assembled model's count") {
  ModelConfig cfg;
  cfg.encoder.stage_channels = {8, 8, 16, 16};
  cfg.encoder.stage_blocks = {1, 1, 1, 1};
  cfg.decoder_width = 8;
  cfg.cam_reduction = 4;
  for (Variant v : {Variant::Base, Variant::BaseTff, Variant::BaseSff, Variant::Full}) {
    cfg.variant = v;
    StNet<float> model(cfg, 0);
    ProfileReport r = profile_model(cfg, 64, 64);
    CHECK(r.params_total == count_params(model));
  }
}

TEST_CASE("parameter count is input-shape independent; flops scale by category") {
  ModelConfig cfg;
  cfg.encoder.width_multiplier = 0.25;
  ProfileReport small = profile_model(cfg, 64, 64);
  ProfileReport big = profile_model(cfg, 128, 128);
  CHECK(small.params_total == big.params_total);
  // doubling the side: convolutional work x4, attention x16, element-wise x4,
  // the channel-gate path unchanged
  CHECK(big.flops_by_category.at("conv") == 4 * small.flops_by_category.at("conv"));
  CHECK(big.flops_by_category.at("attention") == 16 * small.flops_by_category.at("attention"));
  CHECK(big.flops_by_category.at("elementwise") == 4 * small.flops_by_category.at("elementwise"));
  CHECK(big.flops_by_category.at("global") == small.flops_by_category.at("global"));
}

TEST_CASE("incompatible input shapes are rejected") {
  ModelConfig cfg;
  CHECK_THROWS_AS(profile_model(cfg, 100, 128), Error);
  CHECK_THROWS_AS(profile_model(cfg, 0, 0), Error);
}

TEST_CASE("report text carries both conventions and the breakdown") {
  ModelConfig cfg;
  cfg.encoder.stage_channels = {8, 8, 16, 16};
  cfg.encoder.stage_blocks = {1, 1, 1, 1};
  cfg.decoder_width = 8;
  cfg.cam_reduction = 4;
  ProfileReport r = profile_model(cfg, 64, 64);
  std::string text = r.to_text();
  CHECK(text.find("params_total:") != std::string::npos);
  CHECK(text.find("flops_total:") != std::string::npos);
  CHECK(text.find("flops_total_macs:") != std::string::npos);
  CHECK(text.find("backbone:") != std::string::npos);
  CHECK(text.find("spatial_fusion:") != std::string::npos);
}
