#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "model/stnet_model.hpp"

namespace stnet {

// Analytic parameter and FLOP accounting. FLOPs use the multiply-accumulate
// = 2 operations convention; the halved total (MAC-style counting) is
// reported alongside since published figures mix the two. Convolutions and
// linear layers count 2*k^2*(C_in/g)*C_out*H_out*W_out; attention counts
// 2*N*M*d for the score matrix and again for the weighted sum plus 2*N*M for
// the softmax; normalization, activations and element-wise arithmetic count
// one operation per element; bilinear resampling counts 7 per output
// element. Bias additions are not counted.
struct ProfileReport {
  int in_c = 3, in_h = 0, in_w = 0;
  int64_t params_total = 0;
  int64_t flops_total = 0;  // MAC = 2 convention
  std::map<std::string, int64_t> params_by_module;
  std::map<std::string, int64_t> flops_by_module;
  // conv, attention, elementwise scale with the input area (attention with
  // its square); "global" holds the size-independent channel-gate path
  std::map<std::string, int64_t> flops_by_category;

  int64_t flops_total_macs() const { return flops_total / 2; }
  std::string to_text() const;
};

ProfileReport profile_model(const ModelConfig& cfg, int in_h, int in_w);

inline int64_t conv_flops(int k, int cin, int cout, int groups, int64_t oh, int64_t ow) {
  return 2LL * k * k * (cin / groups) * cout * oh * ow;
}

// score matrix + softmax + weighted sum over n_q queries and n_kv keys
inline int64_t attention_flops(int64_t n_q, int64_t n_kv, int d) {
  return 2 * n_q * n_kv * d + 2 * n_q * n_kv + 2 * n_q * n_kv * d;
}

template <typename T>
int64_t count_params(const StNet<T>& model) {
  return model.param_count();
}

}  // namespace stnet
