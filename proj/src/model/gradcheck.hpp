#pragma once

#include <functional>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"

namespace stnet {

// Central finite-difference comparison against reverse-mode gradients.
//
// build() must construct the graph from the *current* contents of the
// watched tensors and return (scalar loss, leaf nodes aligned with wrt).
// Perturbations are applied in place and restored. When max_coords > 0, a
// deterministic pseudo-random subset of coordinates per tensor is checked
// instead of every element.
template <typename T>
struct GradCheckSpec {
  std::function<std::pair<ad::NodeP<T>, std::vector<ad::NodeP<T>>>()> build;
  std::vector<Tensor<T>*> wrt;
  T epsilon = static_cast<T>(1e-5);
  int max_coords_per_tensor = -1;
  uint64_t coord_seed = 0x5eedc0de;
};

template <typename T>
T gradcheck_max_rel_error(const GradCheckSpec<T>& spec) {
  auto [loss, leaves] = spec.build();
  if (leaves.size() != spec.wrt.size()) data_error("gradcheck: leaf/tensor count mismatch");
  if (!std::isfinite(static_cast<double>(loss->value[0]))) numeric_error("gradcheck: non-finite loss");
  ad::backward(loss);

  std::vector<Tensor<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) {
    if (l->has_grad()) {
      analytic.push_back(l->grad);
    } else {
      analytic.push_back(Tensor<T>(l->value.shape));
    }
  }

  Rng rng(spec.coord_seed);
  T worst = T(0);
  const T eps = spec.epsilon;
  for (size_t t = 0; t < spec.wrt.size(); ++t) {
    Tensor<T>& tensor = *spec.wrt[t];
    const int64_t n = tensor.numel();
    std::vector<int64_t> coords;
    if (spec.max_coords_per_tensor > 0 && n > spec.max_coords_per_tensor) {
      for (int i = 0; i < spec.max_coords_per_tensor; ++i)
        coords.push_back(static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n)));
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }
    for (int64_t c : coords) {
      const T orig = tensor[c];
      tensor[c] = orig + eps;
      T up = spec.build().first->value[0];
      tensor[c] = orig - eps;
      T down = spec.build().first->value[0];
      tensor[c] = orig;
      if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down)))
        numeric_error("gradcheck: non-finite perturbed loss");
      T fd = (up - down) / (T(2) * eps);
      T an = analytic[t][c];
      T denom = std::max({std::abs(an), std::abs(fd), static_cast<T>(1e-3)});
      worst = std::max(worst, std::abs(an - fd) / denom);
    }
  }
  if (!std::isfinite(static_cast<double>(worst))) numeric_error("gradcheck: non-finite result");
  return worst;
}

// Fixed projection weights for reducing a tensor output to a scalar.
template <typename T>
Tensor<T> reduction_weights(const std::vector<int>& shape, uint64_t seed = 0x7ea5) {
  Tensor<T> w(shape);
  Rng rng(seed);
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return w;
}

}  // namespace stnet
