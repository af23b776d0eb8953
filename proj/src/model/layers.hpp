#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace stnet {

enum class ParamKind { ConvWeight, LinearWeight, Bias, BnScale, BnShift };

inline bool decays(ParamKind k) {
  return k == ParamKind::ConvWeight || k == ParamKind::LinearWeight;
}

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  ParamKind kind;
};

// Non-trainable state that still belongs in checkpoints (batchnorm running stats).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

// Per-forward-pass binding of module-owned parameter tensors to graph leaves.
// Binding the same tensor twice returns the same node, which is what makes
// the Siamese encoder share weights: gradients from both streams accumulate
// on one leaf.
template <typename T>
struct ParamBind {
  bool train = false;
  bool grads = false;
  std::unordered_map<const void*, ad::NodeP<T>> bound;

  ad::NodeP<T> leaf(Tensor<T>& t) {
    auto it = bound.find(&t);
    if (it != bound.end()) return it->second;
    auto n = ad::make_leaf(t, grads);
    bound.emplace(&t, n);
    return n;
  }

  ad::NodeP<T> constant(Tensor<T> t) { return ad::make_leaf(std::move(t), false); }

  // gradient accumulated for a parameter this pass, or null
  const Tensor<T>* grad_of(const Tensor<T>& t) const {
    auto it = bound.find(&t);
    if (it == bound.end() || !it->second->has_grad()) return nullptr;
    return &it->second->grad;
  }
};

// fan-out-scaled normal init for conv/linear weights
template <typename T>
void init_normal(Tensor<T>& w, double stddev, Rng& rng) {
  for (auto& v : w.data) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
struct Conv2d {
  int in_c = 0, out_c = 0, kh = 1, kw = 1, stride = 1, pad = 0, groups = 1;
  bool bias = true;
  Tensor<T> w, b;

  Conv2d() = default;
  Conv2d(int in_c_, int out_c_, int k, int stride_, int pad_, int groups_, bool bias_, Rng& rng)
      : in_c(in_c_), out_c(out_c_), kh(k), kw(k), stride(stride_), pad(pad_), groups(groups_),
        bias(bias_) {
    w = Tensor<T>({out_c, in_c / groups, kh, kw});
    double fan_out = static_cast<double>(kh) * kw * out_c / groups;
    init_normal(w, std::sqrt(2.0 / fan_out), rng);
    if (bias) b = Tensor<T>({out_c});
  }

  ad::NodeP<T> operator()(ParamBind<T>& pb, ad::NodeP<T> x) {
    return ad::conv2d(x, pb.leaf(w), bias ? pb.leaf(b) : nullptr, stride, pad, groups);
  }

  void reg(const std::string& prefix, std::vector<ParamRef<T>>& params) {
    params.push_back({prefix + ".weight", &w, ParamKind::ConvWeight});
    if (bias) params.push_back({prefix + ".bias", &b, ParamKind::Bias});
  }

  int64_t param_count() const { return w.numel() + (bias ? b.numel() : 0); }
};

template <typename T>
struct BatchNorm2d {
  int c = 0;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);
  Tensor<T> gamma, beta, running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c_)
      : c(c_), gamma({c_}, T(1)), beta({c_}, T(0)), running_mean({c_}, T(0)),
        running_var({c_}, T(1)) {}

  ad::NodeP<T> operator()(ParamBind<T>& pb, ad::NodeP<T> x) {
    return ad::batchnorm2d(x, pb.leaf(gamma), pb.leaf(beta), &running_mean, &running_var, pb.train,
                           momentum, eps);
  }

  void reg(const std::string& prefix, std::vector<ParamRef<T>>& params,
           std::vector<BufferRef<T>>& buffers) {
    params.push_back({prefix + ".gamma", &gamma, ParamKind::BnScale});
    params.push_back({prefix + ".beta", &beta, ParamKind::BnShift});
    buffers.push_back({prefix + ".running_mean", &running_mean});
    buffers.push_back({prefix + ".running_var", &running_var});
  }

  int64_t param_count() const { return gamma.numel() + beta.numel(); }
};

template <typename T>
struct Linear {
  int in_f = 0, out_f = 0;
  bool bias = true;
  Tensor<T> w, b;

  Linear() = default;
  Linear(int in_f_, int out_f_, bool bias_, Rng& rng) : in_f(in_f_), out_f(out_f_), bias(bias_) {
    w = Tensor<T>({out_f, in_f});
    init_normal(w, std::sqrt(2.0 / out_f), rng);
    if (bias) b = Tensor<T>({out_f});
  }

  ad::NodeP<T> operator()(ParamBind<T>& pb, ad::NodeP<T> x) {
    return ad::linear(x, pb.leaf(w), bias ? pb.leaf(b) : nullptr);
  }

  void reg(const std::string& prefix, std::vector<ParamRef<T>>& params) {
    params.push_back({prefix + ".weight", &w, ParamKind::LinearWeight});
    if (bias) params.push_back({prefix + ".bias", &b, ParamKind::Bias});
  }

  int64_t param_count() const { return w.numel() + (bias ? b.numel() : 0); }
};

}  // namespace stnet
