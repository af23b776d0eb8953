#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"
#include "data/dataset.hpp"

namespace stnet {

// Versioned binary container. Everything is stored as raw little-endian
// bytes, so save -> load -> save round-trips bit-exactly. Unknown versions
// are refused.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string config_json;
  uint32_t epoch = 0;
  uint64_t step = 0;
  double best_val_f1 = -1.0;
  ChannelStats stats;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;  // params then buffers

  bool has_optimizer = false;
  uint64_t adam_t = 0;
  std::vector<std::pair<std::string, Tensor<float>>> adam_m, adam_v;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const Tensor<float>* find(const std::string& name) const;
};

}  // namespace stnet
