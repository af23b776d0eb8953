#pragma once

#include "core/autodiff.hpp"

namespace stnet {

struct FocalConfig {
  double alpha = 0.2;
  double gamma = 2.0;

  void validate() const {
    if (alpha < 0 || alpha > 1) usage_error("focal: alpha must be in [0,1]");
    if (gamma < 0) usage_error("focal: gamma must be >= 0");
  }
};

struct DiceConfig {
  double smooth = 1.0;

  void validate() const {
    if (smooth < 0) usage_error("dice: smooth must be >= 0");
  }
};

constexpr double kProbEps = 1e-7;

// target mask {N,1,H,W} with values in {0,1}, expanded against the changed-class
// probability {N,1,H,W}. Mean of -alpha * (1-p_hat)^gamma * log(p_hat).
template <typename T>
ad::NodeP<T> focal_loss_node(ad::NodeP<T> prob_changed, const Tensor<T>& target,
                             const FocalConfig& cfg) {
  check_same_shape(prob_changed->value, target, "focal_loss");
  Tensor<T> y = target;
  Tensor<T> y_inv(target.shape);
  for (int64_t i = 0; i < y_inv.numel(); ++i) y_inv[i] = T(1) - y[i];
  auto yn = ad::make_leaf(std::move(y), false);
  auto yni = ad::make_leaf(std::move(y_inv), false);
  // p_hat = p where y=1, 1-p elsewhere
  auto phat = ad::add(ad::mul(prob_changed, yn), ad::mul(ad::affine(prob_changed, T(-1), T(1)), yni));
  phat = ad::clamp_op(phat, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
  auto mod = ad::pow_const(ad::affine(phat, T(-1), T(1)), static_cast<T>(cfg.gamma));
  auto per_pixel = ad::scale(ad::mul(mod, ad::log_op(phat)), static_cast<T>(-cfg.alpha));
  return ad::mean_all(per_pixel);
}

// Soft dice over both classes: per sample and per class,
// dice = (2 sum(p g) + eps) / (sum p + sum g + eps); loss = 1 - mean(dice),
// averaged over the batch. Hand-written backward.
template <typename T>
ad::NodeP<T> dice_loss_node(ad::NodeP<T> prob, const Tensor<T>& target, const DiceConfig& cfg) {
  const int N = prob->value.dim(0), C = prob->value.dim(1);
  const int64_t plane = static_cast<int64_t>(prob->value.dim(2)) * prob->value.dim(3);
  if (C != 2) data_error("dice_loss: expected 2-channel probabilities");
  if (target.numel() != static_cast<int64_t>(N) * plane) data_error("dice_loss: target shape mismatch");
  const T eps = static_cast<T>(cfg.smooth);

  // one-hot ground truth: channel 0 unchanged, channel 1 changed
  auto g_at = [&](int n, int c, int64_t i) {
    T t = target[static_cast<int64_t>(n) * plane + i];
    return c == 1 ? t : T(1) - t;
  };

  Tensor<T> num({N, C}), den({N, C});
  T loss_acc = T(0);
  for (int n = 0; n < N; ++n) {
    T dice_sum = T(0);
    for (int c = 0; c < C; ++c) {
      const T* p = prob->value.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T s_pg = T(0), s_p = T(0), s_g = T(0);
      for (int64_t i = 0; i < plane; ++i) {
        T g = g_at(n, c, i);
        s_pg += p[i] * g;
        s_p += p[i];
        s_g += g;
      }
      T nu = T(2) * s_pg + eps;
      T de = s_p + s_g + eps;
      num[static_cast<int64_t>(n) * C + c] = nu;
      den[static_cast<int64_t>(n) * C + c] = de;
      dice_sum += nu / de;
    }
    loss_acc += T(1) - dice_sum / static_cast<T>(C);
  }
  Tensor<T> out({1});
  out[0] = loss_acc / static_cast<T>(N);

  Tensor<T> tgt = target;
  return ad::make_op<T>(
      std::move(out), {prob}, [prob, tgt, num, den, N, C, plane](ad::Node<T>& self) {
        if (!prob->requires_grad) return;
        Tensor<T>& gp = prob->g();
        const T g0 = self.grad[0];
        const T scale = g0 / static_cast<T>(N * C);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            T nu = num[static_cast<int64_t>(n) * C + c];
            T de = den[static_cast<int64_t>(n) * C + c];
            T* gpp = gp.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              T t = tgt[static_cast<int64_t>(n) * plane + i];
              T g = c == 1 ? t : T(1) - t;
              // d dice / d p = (2 g de - nu) / de^2; loss adds -mean over n,c
              gpp[i] -= scale * (T(2) * g * de - nu) / (de * de);
            }
          }
      });
}

// logits {N,2,H,W}, target {N,H,W} binary -> focal(changed prob) + dice(prob)
template <typename T>
ad::NodeP<T> hybrid_loss_node(ad::NodeP<T> logits, const Tensor<T>& target, const FocalConfig& fcfg,
                              const DiceConfig& dcfg) {
  auto prob = ad::softmax_channel(logits);
  auto p_changed = ad::slice_channels(prob, 1, 2);
  Tensor<T> t4({logits->value.dim(0), 1, logits->value.dim(2), logits->value.dim(3)});
  t4.data = target.data;
  auto focal = focal_loss_node(p_changed, t4, fcfg);
  auto dice = dice_loss_node(prob, target, dcfg);
  return ad::add(focal, dice);
}

// Plain-value surfaces (spec operation signatures, single sample).

template <typename T>
T focal_loss(const Tensor<T>& prob_changed, const Tensor<T>& target, const FocalConfig& cfg) {
  if (prob_changed.ndim() != 2) data_error("focal_loss: expected HxW probabilities");
  check_same_shape(prob_changed, target, "focal_loss");
  Tensor<T> p4({1, 1, prob_changed.dim(0), prob_changed.dim(1)});
  p4.data = prob_changed.data;
  Tensor<T> t4(p4.shape);
  t4.data = target.data;
  return focal_loss_node(ad::make_leaf(std::move(p4), false), t4, cfg)->value[0];
}

template <typename T>
T dice_loss(const Tensor<T>& prob, const Tensor<T>& target, const DiceConfig& cfg) {
  if (prob.ndim() != 3 || prob.dim(0) != 2) data_error("dice_loss: expected 2xHxW probabilities");
  if (target.numel() != static_cast<int64_t>(prob.dim(1)) * prob.dim(2))
    data_error("dice_loss: target shape mismatch");
  Tensor<T> p4({1, 2, prob.dim(1), prob.dim(2)});
  p4.data = prob.data;
  return dice_loss_node(ad::make_leaf(std::move(p4), false), target, cfg)->value[0];
}

template <typename T>
T hybrid_loss(const Tensor<T>& logits, const Tensor<T>& target, const FocalConfig& fcfg,
              const DiceConfig& dcfg) {
  if (logits.ndim() != 3 || logits.dim(0) != 2) data_error("hybrid_loss: expected 2xHxW logits");
  Tensor<T> l4({1, 2, logits.dim(1), logits.dim(2)});
  l4.data = logits.data;
  return hybrid_loss_node(ad::make_leaf(std::move(l4), false), target, fcfg, dcfg)->value[0];
}

}  // namespace stnet
