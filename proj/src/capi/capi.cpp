#include "stnet.h"

#include <cstring>
#include <string>

#include "core/error.hpp"
#include "data/synth.hpp"
#include "data/tiling.hpp"
#include "profile/profiler.hpp"
#include "train/trainer.hpp"

using namespace stnet;

struct stnet_config {
  RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

stnet_status set_error(ErrorClass cls, const std::string& msg) {
  g_last_error = msg;
  return static_cast<stnet_status>(static_cast<int>(cls));
}

template <typename Fn>
stnet_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return STNET_OK;
  } catch (const Error& e) {
    return set_error(e.cls(), e.what());
  } catch (const std::exception& e) {
    return set_error(ErrorClass::Data, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* stnet_version(void) { return "1.0.0"; }

const char* stnet_last_error(void) { return g_last_error.c_str(); }

stnet_config* stnet_config_create(void) { return new stnet_config{}; }

void stnet_config_free(stnet_config* cfg) { delete cfg; }

stnet_status stnet_config_load_file(stnet_config* cfg, const char* path) {
  if (!cfg || !path) return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] {
    RunConfig loaded = RunConfig::load_file(path);
    cfg->cfg = loaded;
  });
}

stnet_status stnet_config_set(stnet_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] { cfg->cfg.set(key, value); });
}

char* stnet_config_dump(const stnet_config* cfg) {
  if (!cfg) return nullptr;
  return dup_string(cfg->cfg.to_json_text());
}

void stnet_string_free(char* s) { std::free(s); }

stnet_status stnet_synth(const char* out_dir, int n, int size, uint64_t seed, double change_rate) {
  if (!out_dir) return set_error(ErrorClass::Usage, "null output directory");
  return guarded([&] { write_synth_dataset(out_dir, seed, n, size, change_rate); });
}

stnet_status stnet_tile(const char* a_path, const char* b_path, const char* label_path, int size,
                        int stride, const char* out_dir, int* tile_count_out) {
  if (!a_path || !b_path || !label_path || !out_dir)
    return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] {
    ImageU8 a = read_image(a_path);
    ImageU8 b = read_image(b_path);
    ImageU8 label = read_image(label_path);
    auto tiles = tile_pair(a, b, label, size, stride);
    int64_t count = write_tiles(out_dir, tiles);
    if (tile_count_out) *tile_count_out = static_cast<int>(count);
  });
}

stnet_status stnet_train(const stnet_config* cfg, const char* data_root, const char* out_dir) {
  if (!cfg || !out_dir) return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] { train_model(cfg->cfg, data_root ? data_root : "", out_dir); });
}

stnet_status stnet_evaluate(const char* checkpoint_path, const char* data_root, const char* split,
                            const char* report_path, stnet_scores* scores_out) {
  if (!checkpoint_path || !data_root || !split)
    return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] {
    Scores s = evaluate_checkpoint(checkpoint_path, data_root, split_from_string(split));
    if (report_path) write_scores(report_path, s);
    if (scores_out) *scores_out = {s.f1, s.precision, s.recall, s.iou, s.oa};
  });
}

stnet_status stnet_predict(const char* checkpoint_path, const char* a_path, const char* b_path,
                           const char* mask_out, const char* prob_out, const char* label_path,
                           const char* overlay_out) {
  if (!checkpoint_path || !a_path || !b_path || !mask_out)
    return set_error(ErrorClass::Usage, "null argument");
  if (overlay_out && !label_path)
    return set_error(ErrorClass::Usage, "an overlay needs --label ground truth");
  return guarded([&] {
    ImageU8 a = read_image(a_path);
    ImageU8 b = read_image(b_path);
    Prediction pred = predict_checkpoint(checkpoint_path, a, b);

    ImageU8 mask_img(pred.w, pred.h, 1);
    for (size_t i = 0; i < pred.mask.size(); ++i) mask_img.data[i] = pred.mask[i] ? 255 : 0;
    write_image(mask_out, mask_img);

    if (prob_out) {
      const int64_t plane = static_cast<int64_t>(pred.h) * pred.w;
      std::vector<uint16_t> prob16(static_cast<size_t>(plane));
      for (int64_t i = 0; i < plane; ++i)
        prob16[static_cast<size_t>(i)] =
            static_cast<uint16_t>(std::lround(pred.prob[plane + i] * 65535.0f));
      write_pgm16(prob_out, prob16, pred.w, pred.h);
    }

    if (overlay_out) {
      ImageU8 raw = read_image(label_path);
      if (raw.w != pred.w || raw.h != pred.h)
        data_error("label dimensions do not match the prediction");
      auto gt = normalize_mask(raw);
      auto rgb = overlay_rgb(pred.mask, gt);
      ImageU8 overlay(pred.w, pred.h, 3);
      overlay.data = rgb;
      write_image(overlay_out, overlay);
    }
  });
}

stnet_status stnet_profile(const stnet_config* cfg, int in_h, int in_w, char** report_out) {
  if (!cfg || !report_out) return set_error(ErrorClass::Usage, "null argument");
  return guarded([&] {
    ProfileReport report = profile_model(cfg->cfg.model_config(), in_h, in_w);
    *report_out = dup_string(report.to_text());
  });
}

}  // extern "C"
