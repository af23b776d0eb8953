#include "train/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "data/augment.hpp"
#include "train/adam.hpp"

namespace fs = std::filesystem;

namespace stnet {

namespace {

// stacks tiles into {B,3,S,S} pairs plus a {B,S,S} float target
struct Batch {
  Tensor<float> t1, t2, target;
};

Batch make_batch(const std::vector<BiTemporalTile>& tiles, const std::vector<size_t>& idx) {
  const int B = static_cast<int>(idx.size());
  const int H = tiles[idx[0]].height(), W = tiles[idx[0]].width();
  Batch b{Tensor<float>({B, 3, H, W}), Tensor<float>({B, 3, H, W}), Tensor<float>({B, H, W})};
  const int64_t img = static_cast<int64_t>(3) * H * W;
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int i = 0; i < B; ++i) {
    const BiTemporalTile& t = tiles[idx[static_cast<size_t>(i)]];
    std::copy(t.t1.data.begin(), t.t1.data.end(), b.t1.data.begin() + i * img);
    std::copy(t.t2.data.begin(), t.t2.data.end(), b.t2.data.begin() + i * img);
    for (int64_t p = 0; p < plane; ++p)
      b.target[i * plane + p] = t.mask.empty() ? 0.0f : static_cast<float>(t.mask[static_cast<size_t>(p)]);
  }
  return b;
}

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string engine_state(uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  os << rng.engine();
  return os.str();
}

}  // namespace

Checkpoint checkpoint_from_model(const StNet<float>& model, const RunConfig& cfg,
                                 const ChannelStats& stats) {
  Checkpoint ck;
  ck.config_json = cfg.to_json_text();
  ck.stats = stats;
  for (const auto& p : model.params) ck.tensors.emplace_back(p.name, *p.value);
  for (const auto& b : model.buffers) ck.tensors.emplace_back(b.name, *b.value);
  return ck;
}

void load_model_weights(StNet<float>& model, const Checkpoint& ck) {
  auto apply = [&](const std::string& name, Tensor<float>* dst) {
    const Tensor<float>* src = ck.find(name);
    if (!src) data_error("checkpoint is missing tensor " + name);
    if (src->shape != dst->shape)
      data_error("checkpoint tensor " + name + " has shape " + shape_str(src->shape) +
                 ", model expects " + shape_str(dst->shape));
    *dst = *src;
  };
  for (auto& p : model.params) apply(p.name, p.value);
  for (auto& b : model.buffers) apply(b.name, b.value);
}

std::unique_ptr<StNet<float>> model_from_checkpoint(const Checkpoint& ck, RunConfig* cfg_out) {
  RunConfig cfg = RunConfig::from_json_text(ck.config_json);
  auto model = assemble_model<float>(cfg.model_config(), cfg.train.seed);
  load_model_weights(*model, ck);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

Scores evaluate_tiles(StNet<float>& model, const std::vector<BiTemporalTile>& tiles,
                      int batch_size, bool threshold_free, ConfusionCounts* counts_out) {
  ConfusionCounts counts;
  for (size_t at = 0; at < tiles.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = at; i < std::min(tiles.size(), at + static_cast<size_t>(batch_size)); ++i) {
      if (!tiles[i].has_mask()) data_error("evaluate: tile " + tiles[i].name + " has no mask");
      idx.push_back(i);
    }
    Batch b = make_batch(tiles, idx);
    ParamBind<float> pb;  // eval mode, no gradients
    auto logits = model.forward(pb, ad::make_leaf(std::move(b.t1), false),
                                ad::make_leaf(std::move(b.t2), false));
    const int H = logits->value.dim(2), W = logits->value.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (size_t i = 0; i < idx.size(); ++i) {
      Tensor<float> sample({2, H, W});
      std::copy(logits->value.data.begin() + static_cast<int64_t>(i) * 2 * plane,
                logits->value.data.begin() + static_cast<int64_t>(i + 1) * 2 * plane,
                sample.data.begin());
      Tensor<float> prob = to_probability(sample);
      std::vector<uint8_t> pred;
      if (threshold_free) {
        pred = binarize(prob);
      } else {
        pred.resize(static_cast<size_t>(plane));
        for (int64_t p = 0; p < plane; ++p) pred[static_cast<size_t>(p)] = prob[plane + p] > 0.5f ? 1 : 0;
      }
      counts = accumulate(counts, pred, tiles[idx[i]].mask);
    }
  }
  if (counts_out) *counts_out = counts;
  return finalize(counts);
}

Scores evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_root, Split split,
                           bool threshold_free) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  auto model = model_from_checkpoint(ck);
  DatasetRoot root = DatasetRoot::open(data_root);
  auto tiles = root.load_all(split);
  if (tiles.empty()) data_error("split '" + std::string(split_dir(split)) + "' of " + data_root + " is empty");
  return evaluate_tiles(*model, tiles, 8, threshold_free);
}

Prediction predict_with_model(StNet<float>& model, const ChannelStats& stats, const ImageU8& a,
                              const ImageU8& b) {
  if (a.c != 3 || b.c != 3) data_error("predict: expected RGB images");
  if (a.w != b.w || a.h != b.h)
    data_error("co-registration error: image sizes " + std::to_string(a.w) + "x" +
               std::to_string(a.h) + " vs " + std::to_string(b.w) + "x" + std::to_string(b.h));
  Tensor<float> t1 = standardize(a, stats), t2 = standardize(b, stats);
  Tensor<float> b1({1, 3, a.h, a.w}), b2({1, 3, a.h, a.w});
  b1.data = t1.data;
  b2.data = t2.data;
  ParamBind<float> pb;
  auto logits = model.forward(pb, ad::make_leaf(std::move(b1), false),
                              ad::make_leaf(std::move(b2), false));
  Prediction out;
  out.h = a.h;
  out.w = a.w;
  Tensor<float> sample({2, a.h, a.w});
  sample.data = logits->value.data;
  out.prob = to_probability(sample);
  out.mask = binarize(out.prob);
  return out;
}

Prediction predict_checkpoint(const std::string& ckpt_path, const ImageU8& a, const ImageU8& b) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  auto model = model_from_checkpoint(ck);
  return predict_with_model(*model, ck.stats, a, b);
}

TrainResult train_model(const RunConfig& cfg_in, const std::string& data_root,
                        const std::string& out_dir) {
  RunConfig cfg = cfg_in;
  if (!data_root.empty()) cfg.data_root = data_root;
  cfg.validate();
  if (cfg.data_root.empty()) usage_error("train: no dataset root configured");

  DatasetRoot root = DatasetRoot::open(cfg.data_root);
  auto train_tiles = root.load_all(Split::Train);
  auto val_tiles = root.load_all(Split::Val);
  if (train_tiles.empty()) data_error("train split of " + cfg.data_root + " is empty");

  fs::create_directories(out_dir);
  cfg.save_file((fs::path(out_dir) / "config.json").string());
  std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string(), std::ios::binary);
  if (!log) data_error("cannot write training log in " + out_dir);

  auto model = assemble_model<float>(cfg.model_config(), cfg.train.seed);
  if (cfg.encoder.pretrained) {
    if (cfg.encoder.pretrained_path.empty())
      usage_error("encoder.pretrained is set but encoder.pretrained_path is empty");
    Checkpoint pre = Checkpoint::load(cfg.encoder.pretrained_path);
    int applied = 0;
    for (auto& p : model->params) {
      if (p.name.rfind("encoder.", 0) != 0) continue;
      const Tensor<float>* src = pre.find(p.name);
      if (!src || src->shape != p.value->shape)
        data_error("pretrained checkpoint lacks compatible tensor " + p.name);
      *p.value = *src;
      ++applied;
    }
    for (auto& b : model->buffers) {
      if (b.name.rfind("encoder.", 0) != 0) continue;
      const Tensor<float>* src = pre.find(b.name);
      if (src && src->shape == b.value->shape) *b.value = *src;
    }
    if (applied == 0) data_error("pretrained checkpoint contains no encoder weights");
  }

  Adam<float> adam(model->params, cfg.train.weight_decay);

  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();

  TrainResult result;
  result.best_path = best_path;
  result.last_path = last_path;

  double best_f1 = -1.0;
  int best_epoch = -1;
  uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    // per-epoch shuffle
    std::vector<size_t> order(train_tiles.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.train.seed, 0x5f000000ull + static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    const double lr = lr_at(cfg.train, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.train.batch_size)) {
      std::vector<size_t> idx(order.begin() + static_cast<int64_t>(at),
                              order.begin() +
                                  static_cast<int64_t>(std::min(order.size(),
                                                                at + static_cast<size_t>(cfg.train.batch_size))));
      std::vector<BiTemporalTile> batch_tiles;
      batch_tiles.reserve(idx.size());
      std::vector<size_t> local(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        Rng aug_rng(mix_seed(cfg.train.seed, 0xa06000000ull + static_cast<uint64_t>(epoch) * 1000003ull + idx[i]));
        batch_tiles.push_back(augment(train_tiles[idx[i]], aug_rng));
        local[i] = i;
      }
      Batch b = make_batch(batch_tiles, local);

      ParamBind<float> pb;
      pb.train = true;
      pb.grads = true;
      auto logits = model->forward(pb, ad::make_leaf(std::move(b.t1), false),
                                   ad::make_leaf(std::move(b.t2), false));
      auto loss = hybrid_loss_node(logits, b.target, cfg.focal, cfg.dice);
      ++step;
      double loss_v = static_cast<double>(loss->value[0]);
      if (!std::isfinite(loss_v))
        numeric_error("non-finite loss at step " + std::to_string(step));
      ad::backward(loss);
      adam.step(lr, pb);

      char line[256];
      std::snprintf(line, sizeof(line),
                    "{\"kind\":\"step\",\"step\":%llu,\"epoch\":%d,\"loss\":%.8f,\"lr\":%.8e,\"ts\":%.3f}\n",
                    static_cast<unsigned long long>(step), epoch, loss_v, lr, now_seconds());
      log << line;
    }

    Scores val{};
    if (!val_tiles.empty()) val = evaluate_tiles(*model, val_tiles, 8);
    char eline[320];
    std::snprintf(eline, sizeof(eline),
                  "{\"kind\":\"epoch\",\"epoch\":%d,\"lr\":%.8e,\"val_f1\":%.6f,\"val_precision\":%.6f,"
                  "\"val_recall\":%.6f,\"val_iou\":%.6f,\"val_oa\":%.6f,\"ts\":%.3f}\n",
                  epoch, lr, val.f1, val.precision, val.recall, val.iou, val.oa, now_seconds());
    log << eline;
    log.flush();

    Checkpoint ck = checkpoint_from_model(*model, cfg, root.stats());
    ck.epoch = static_cast<uint32_t>(epoch);
    ck.step = step;
    ck.rng_state = engine_state(mix_seed(cfg.train.seed, 0xc0ffee + static_cast<uint64_t>(epoch)));
    ck.has_optimizer = true;
    ck.adam_t = static_cast<uint64_t>(adam.t);
    for (size_t i = 0; i < adam.slots.size(); ++i) {
      ck.adam_m.emplace_back(model->params[i].name, adam.slots[i].m);
      ck.adam_v.emplace_back(model->params[i].name, adam.slots[i].v);
    }
    ck.save(last_path);
    result.epochs_run = epoch + 1;

    if (val_tiles.empty() || val.f1 > best_f1) {
      best_f1 = val_tiles.empty() ? 0.0 : val.f1;
      best_epoch = epoch;
      ck.best_val_f1 = best_f1;
      ck.save(best_path);
      result.best_val = val;
    }
    if (cfg.train.early_stop_patience > 0 && best_epoch >= 0 &&
        epoch - best_epoch >= cfg.train.early_stop_patience)
      break;
  }
  result.steps = step;
  return result;
}

}  // namespace stnet
