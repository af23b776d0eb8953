#pragma once

#include <string>
#include <vector>

#include "model/loss.hpp"
#include "model/stnet_model.hpp"

namespace stnet {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int batch_size = 4;
  int epochs = 200;
  std::vector<int> lr_milestones;  // empty: every 10 epochs
  double lr_gamma = 0.9;
  uint64_t seed = 0;
  Variant variant = Variant::Full;
  int early_stop_patience = 0;  // 0 disables early stopping

  void validate() const {
    if (lr <= 0) usage_error("train: lr must be positive");
    if (lr_gamma <= 0) usage_error("train: lr_gamma must be positive");
    if (batch_size <= 0) usage_error("train: batch_size must be positive");
    if (epochs <= 0) usage_error("train: epochs must be positive");
    if (weight_decay < 0) usage_error("train: weight_decay must be >= 0");
    if (early_stop_patience < 0) usage_error("train: early_stop_patience must be >= 0");
    for (size_t i = 1; i < lr_milestones.size(); ++i)
      if (lr_milestones[i] <= lr_milestones[i - 1])
        usage_error("train: lr_milestones must be strictly increasing");
  }

  std::vector<int> effective_milestones() const {
    if (!lr_milestones.empty()) return lr_milestones;
    std::vector<int> m;
    for (int e = 10; e <= epochs; e += 10) m.push_back(e);
    return m;
  }
};

// lr * gamma^(number of milestones <= epoch)
double lr_at(const TrainConfig& cfg, int epoch);

// Effective run configuration: defaults, overridden by a JSON file, overridden
// by command-line key=value settings. Unknown keys are rejected with the
// offending path.
struct RunConfig {
  std::string data_root;
  EncoderConfig encoder;
  int decoder_width = 64;
  int cam_reduction = 16;
  SffConfig sff;
  FocalConfig focal;
  DiceConfig dice;
  TrainConfig train;

  ModelConfig model_config() const {
    ModelConfig m;
    m.encoder = encoder;
    m.variant = train.variant;
    m.decoder_width = decoder_width;
    m.cam_reduction = cam_reduction;
    m.sff = sff;
    return m;
  }

  void validate() const;

  std::string to_json_text() const;
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // dotted path override, e.g. set("train.seed", "7")
  void set(const std::string& dotted_key, const std::string& value);
};

}  // namespace stnet
