#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/rng.hpp"
#include "model/gradcheck.hpp"
#include "model/loss.hpp"

using namespace stnet;
using D = double;

namespace {

Tensor<D> randt(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

constexpr double kFocalHalf = 0.2 * 0.25 * 0.6931471805599453;  // alpha (1-p)^2 ln 2 at p = 1/2

}  // namespace

TEST_CASE("focal loss point values") {
  FocalConfig cfg;  // alpha 0.2, gamma 2

  SUBCASE("confident correct prediction costs nothing") {
    Tensor<D> p({2, 2}, 1.0), y({2, 2}, 1.0);
    CHECK(focal_loss(p, y, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("p = 0.5 on a positive pixel") {
    Tensor<D> p({1, 1}, 0.5), y({1, 1}, 1.0);
    CHECK(focal_loss(p, y, cfg) == doctest::Approx(kFocalHalf).epsilon(1e-9));
    CHECK(focal_loss(p, y, cfg) == doctest::Approx(0.0346573590279973).epsilon(1e-9));
  }

  SUBCASE("p-hat symmetry: p = 0.5 on a negative pixel costs the same") {
    Tensor<D> p({1, 1}, 0.5), y1({1, 1}, 1.0), y0({1, 1}, 0.0);
    CHECK(focal_loss(p, y0, cfg) == focal_loss(p, y1, cfg));
  }

  SUBCASE("gamma = 0 reduces to alpha-weighted cross-entropy") {
    FocalConfig g0;
    g0.gamma = 0.0;
    Rng rng(3);
    Tensor<D> p = randt({4, 4}, rng, 0.05, 0.95);
    Tensor<D> y({4, 4});
    for (auto& v : y.data) v = rng.coin() ? 1.0 : 0.0;
    double ce = 0;
    for (int64_t i = 0; i < 16; ++i) {
      double ph = y[i] == 1.0 ? p[i] : 1.0 - p[i];
      ce += -0.2 * std::log(ph);
    }
    CHECK(focal_loss(p, y, g0) == doctest::Approx(ce / 16).epsilon(1e-12));
  }

  SUBCASE("shape mismatch is an error") {
    Tensor<D> p({2, 2}, 0.5), y({2, 3}, 0.0);
    CHECK_THROWS_AS(focal_loss(p, y, FocalConfig{}), Error);
  }
}

TEST_CASE("dice loss point values") {
  SUBCASE("exact one-hot prediction, no smoothing") {
    DiceConfig cfg;
    cfg.smooth = 0.0;
    Tensor<D> prob({2, 2, 2});
    Tensor<D> y({2, 2});
    for (int i = 0; i < 4; ++i) {
      bool changed = i % 2 == 0;
      y[i] = changed ? 1.0 : 0.0;
      prob[i] = changed ? 0.0 : 1.0;      // unchanged channel
      prob[4 + i] = changed ? 1.0 : 0.0;  // changed channel
    }
    CHECK(dice_loss(prob, y, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("uniform prediction on a half-changed target scores 0.5") {
    DiceConfig cfg;
    cfg.smooth = 0.0;
    Tensor<D> prob({2, 4, 4}, 0.5);
    Tensor<D> y({4, 4});
    for (int i = 0; i < 16; ++i) y[i] = i < 8 ? 1.0 : 0.0;
    CHECK(dice_loss(prob, y, cfg) == doctest::Approx(0.5).epsilon(1e-9));
  }

  SUBCASE("smoothing rescues an empty class") {
    DiceConfig cfg;
    cfg.smooth = 1.0;
    Tensor<D> prob({2, 3, 3});
    Tensor<D> y({3, 3}, 0.0);
    for (int i = 0; i < 9; ++i) {
      prob[i] = 1.0;
      prob[9 + i] = 0.0;
    }
    CHECK(dice_loss(prob, y, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("joint pixel permutation leaves dice unchanged") {
    Rng rng(5);
    DiceConfig cfg;
    Tensor<D> prob({2, 3, 4});
    Tensor<D> y({3, 4});
    for (int i = 0; i < 12; ++i) {
      double pc = rng.uniform(0.05, 0.95);
      prob[i] = 1 - pc;
      prob[12 + i] = pc;
      y[i] = rng.coin() ? 1.0 : 0.0;
    }
    double base = dice_loss(prob, y, cfg);
    // rotate pixels by 5
    Tensor<D> prob2(prob.shape), y2(y.shape);
    for (int i = 0; i < 12; ++i) {
      int j = (i + 5) % 12;
      prob2[j] = prob[i];
      prob2[12 + j] = prob[12 + i];
      y2[j] = y[i];
    }
    CHECK(dice_loss(prob2, y2, cfg) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("bounds hold for random inputs") {
    Rng rng(6);
    for (int it = 0; it < 20; ++it) {
      Tensor<D> prob({2, 4, 4});
      Tensor<D> y({4, 4});
      for (int i = 0; i < 16; ++i) {
        double pc = rng.uniform(0.0, 1.0);
        prob[i] = 1 - pc;
        prob[16 + i] = pc;
        y[i] = rng.coin() ? 1.0 : 0.0;
      }
      double l = dice_loss(prob, y, DiceConfig{});
      CHECK(l >= 0.0);
      CHECK(l <= 1.0);
    }
  }
}

TEST_CASE("hybrid loss composes focal and dice") {
  SUBCASE("zero logits on a half-changed target") {
    DiceConfig dcfg;
    dcfg.smooth = 0.0;
    Tensor<D> logits({2, 4, 4}, 0.0);
    Tensor<D> y({4, 4});
    for (int i = 0; i < 16; ++i) y[i] = i < 8 ? 1.0 : 0.0;
    double l = hybrid_loss(logits, y, FocalConfig{}, dcfg);
    CHECK(l == doctest::Approx(kFocalHalf + 0.5).epsilon(1e-9));
    CHECK(l == doctest::Approx(0.5346573590279973).epsilon(1e-9));
  }

  SUBCASE("saturated correct prediction drives the loss to zero") {
    Tensor<D> y({2, 2});
    for (int i = 0; i < 4; ++i) y[i] = i % 2 ? 1.0 : 0.0;
    double prev = 1e9;
    for (double margin : {2.0, 8.0, 20.0}) {
      Tensor<D> logits({2, 2, 2});
      for (int i = 0; i < 4; ++i) {
        logits[i] = y[i] == 1.0 ? -margin : margin;
        logits[4 + i] = y[i] == 1.0 ? margin : -margin;
      }
      DiceConfig dcfg;
      dcfg.smooth = 0.0;
      double l = hybrid_loss(logits, y, FocalConfig{}, dcfg);
      CHECK(l < prev);
      prev = l;
    }
    CHECK(prev < 1e-6);
  }

  SUBCASE("losses are non-negative on random inputs") {
    Rng rng(8);
    for (int it = 0; it < 10; ++it) {
      Tensor<D> logits = randt({2, 4, 4}, rng, -4, 4);
      Tensor<D> y({4, 4});
      for (auto& v : y.data) v = rng.coin() ? 1.0 : 0.0;
      CHECK(hybrid_loss(logits, y, FocalConfig{}, DiceConfig{}) >= 0.0);
    }
  }
}

TEST_CASE("hybrid loss gradient matches finite differences to 1e-6") {
  Rng rng(9);
  Tensor<D> logits = randt({1, 2, 4, 4}, rng, -2, 2);
  Tensor<D> y({1, 4, 4});
  for (auto& v : y.data) v = rng.coin() ? 1.0 : 0.0;
  FocalConfig fcfg;
  DiceConfig dcfg;

  GradCheckSpec<D> spec;
  spec.epsilon = 1e-6;
  spec.wrt = {&logits};
  spec.build = [&]() {
    auto leaf = ad::make_leaf(logits, true);
    auto loss = hybrid_loss_node(leaf, y, fcfg, dcfg);
    return std::make_pair(loss, std::vector<ad::NodeP<D>>{leaf});
  };
  CHECK(gradcheck_max_rel_error(spec) < 1e-6);
}

TEST_CASE("focal and dice configs validate their domains") {
  FocalConfig f;
  f.alpha = 1.5;
  CHECK_THROWS_AS(f.validate(), Error);
  f = FocalConfig{};
  f.gamma = -1;
  CHECK_THROWS_AS(f.validate(), Error);
  DiceConfig d;
  d.smooth = -0.1;
  CHECK_THROWS_AS(d.validate(), Error);
}
