#pragma once

#include <cmath>
#include <vector>

#include "model/layers.hpp"

namespace stnet {

// Adam with L2 weight decay folded into the gradient. Decay applies to
// convolution/linear weights only; biases and normalization scale/shift
// parameters stay decay-free.
template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  int64_t t = 0;

  struct Slot {
    Tensor<T>* param;
    Tensor<T> m, v;
    bool decay;
    ParamKind kind;
  };
  std::vector<Slot> slots;

  Adam() = default;
  Adam(const std::vector<ParamRef<T>>& params, double wd) : weight_decay(wd) {
    for (const auto& p : params)
      slots.push_back({p.value, Tensor<T>(p.value->shape), Tensor<T>(p.value->shape),
                       decays(p.kind), p.kind});
  }

  // applies gradients accumulated in this pass's bindings
  void step(double lr, const ParamBind<T>& pb) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& s : slots) {
      const Tensor<T>* grad = pb.grad_of(*s.param);
      if (!grad) continue;
      Tensor<T>& p = *s.param;
      const int64_t n = p.numel();
      for (int64_t i = 0; i < n; ++i) {
        double g = static_cast<double>((*grad)[i]);
        if (s.decay && weight_decay != 0.0) g += weight_decay * static_cast<double>(p[i]);
        double m = beta1 * static_cast<double>(s.m[i]) + (1.0 - beta1) * g;
        double v = beta2 * static_cast<double>(s.v[i]) + (1.0 - beta2) * g * g;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        p[i] = static_cast<T>(static_cast<double>(p[i]) -
                              lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
      }
    }
  }
};

}  // namespace stnet
