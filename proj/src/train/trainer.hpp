#pragma once

#include <memory>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "eval/metrics.hpp"
#include "model/stnet_model.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"

namespace stnet {

struct TrainResult {
  std::string best_path, last_path;
  Scores best_val;
  uint64_t steps = 0;
  int epochs_run = 0;
};

// Full training run: per-epoch shuffled batches with augmentation, hybrid
// focal+dice objective, Adam with the multi-step schedule, per-epoch val
// scoring, best-F1 and last checkpoints, JSONL log. Deterministic in
// (seed, config, dataset).
TrainResult train_model(const RunConfig& cfg, const std::string& data_root,
                        const std::string& out_dir);

// threshold_free: argmax readout; otherwise p_changed > 0.5 (identical for a
// two-class softmax, both kept for the evaluation contract)
Scores evaluate_tiles(StNet<float>& model, const std::vector<BiTemporalTile>& tiles,
                      int batch_size, bool threshold_free = true,
                      ConfusionCounts* counts_out = nullptr);

Scores evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_root, Split split,
                           bool threshold_free = true);

struct Prediction {
  Tensor<float> prob;  // {2,H,W}
  std::vector<uint8_t> mask;
  int h = 0, w = 0;
};

Prediction predict_with_model(StNet<float>& model, const ChannelStats& stats, const ImageU8& a,
                              const ImageU8& b);
Prediction predict_checkpoint(const std::string& ckpt_path, const ImageU8& a, const ImageU8& b);

Checkpoint checkpoint_from_model(const StNet<float>& model, const RunConfig& cfg,
                                 const ChannelStats& stats);
void load_model_weights(StNet<float>& model, const Checkpoint& ck);
std::unique_ptr<StNet<float>> model_from_checkpoint(const Checkpoint& ck,
                                                    RunConfig* cfg_out = nullptr);

}  // namespace stnet
