// Command-line front end. Links the shared library through the C interface
// only; exit codes are 0 success, 1 usage error, 2 data error, 3 numerical
// error, with a single machine-parseable error line on stderr.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stnet.h"

namespace {

const char* class_prefix(stnet_status s) {
  switch (s) {
    case STNET_ERR_USAGE: return "usage";
    case STNET_ERR_DATA: return "data";
    case STNET_ERR_NUMERIC: return "numeric";
    default: return "internal";
  }
}

int fail(stnet_status s) {
  std::fprintf(stderr, "error(%s): %s\n", class_prefix(s), stnet_last_error());
  return static_cast<int>(s);
}

int usage_fail(const std::string& msg) {
  std::fprintf(stderr, "error(usage): %s\n", msg.c_str());
  return static_cast<int>(STNET_ERR_USAGE);
}

struct ConfigHandle {
  stnet_config* cfg = stnet_config_create();
  ~ConfigHandle() { stnet_config_free(cfg); }
};

// defaults < --config file < --set overrides (plus dedicated flags)
int apply_config(ConfigHandle& h, const std::string& config_path,
                 const std::vector<std::string>& sets) {
  if (!config_path.empty()) {
    stnet_status s = stnet_config_load_file(h.cfg, config_path.c_str());
    if (s != STNET_OK) return fail(s);
  }
  for (const auto& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) return usage_fail("--set expects key=value, got '" + kv + "'");
    stnet_status s = stnet_config_set(h.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != STNET_OK) return fail(s);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stnet — bi-temporal change detection toolkit"};
  app.require_subcommand(1);

  // ---- tile
  std::string tile_a, tile_b, tile_label, tile_out;
  int tile_size = 256, tile_stride = 256;
  auto* tile = app.add_subcommand("tile", "cut a co-registered raster triplet into tiles");
  tile->add_option("--a", tile_a, "T1 raster (PPM)")->required();
  tile->add_option("--b", tile_b, "T2 raster (PPM)")->required();
  tile->add_option("--label", tile_label, "change mask raster (PGM)")->required();
  tile->add_option("--size", tile_size, "tile side (multiple of 32)");
  tile->add_option("--stride", tile_stride, "grid stride");
  tile->add_option("--out", tile_out, "output directory")->required();

  // ---- synth
  std::string synth_out;
  int synth_n = 0, synth_size = 64;
  uint64_t synth_seed = 0;
  double synth_rate = 0.15;
  auto* synth = app.add_subcommand("synth", "generate a synthetic change-detection dataset");
  synth->add_option("--out", synth_out, "output dataset root")->required();
  synth->add_option("--n", synth_n, "number of samples")->required();
  synth->add_option("--size", synth_size, "tile side (multiple of 32)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--change-rate", synth_rate, "mean changed-pixel fraction");

  // ---- train
  std::string train_config, train_data, train_out;
  int64_t train_seed = -1;
  std::vector<std::string> train_sets;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--data", train_data, "dataset root")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "training seed (overrides config)");
  train->add_option("--set", train_sets, "config override key=value (repeatable)");

  // ---- eval
  std::string eval_ckpt, eval_data, eval_split = "test", eval_report;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--split", eval_split, "train, val or test");
  eval->add_option("--report", eval_report, "write the score report here");

  // ---- predict
  std::string pr_ckpt, pr_a, pr_b, pr_mask, pr_prob, pr_label, pr_overlay;
  auto* predict = app.add_subcommand("predict", "predict a change map for an image pair");
  predict->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
  predict->add_option("--a", pr_a, "T1 image (PPM)")->required();
  predict->add_option("--b", pr_b, "T2 image (PPM)")->required();
  predict->add_option("--out-mask", pr_mask, "binary change mask output (PGM, 0/255)")->required();
  predict->add_option("--out-prob", pr_prob, "changed-class probability raster (16-bit PGM)");
  predict->add_option("--label", pr_label, "ground-truth mask for the overlay");
  predict->add_option("--out-overlay", pr_overlay, "TP/TN/FP/FN overlay output (PPM)");

  // ---- profile
  std::string prof_config;
  int prof_size = 256;
  std::vector<std::string> prof_sets;
  auto* profile = app.add_subcommand("profile", "report parameter and FLOP counts");
  profile->add_option("--config", prof_config, "JSON config file");
  profile->add_option("--input-size", prof_size, "square input side (multiple of 32)");
  profile->add_option("--set", prof_sets, "config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error(usage): %s\n", e.what());
    return static_cast<int>(STNET_ERR_USAGE);
  }

  if (tile->parsed()) {
    int count = 0;
    stnet_status s = stnet_tile(tile_a.c_str(), tile_b.c_str(), tile_label.c_str(), tile_size,
                                tile_stride, tile_out.c_str(), &count);
    if (s != STNET_OK) return fail(s);
    std::printf("%d\n", count);
    return 0;
  }

  if (synth->parsed()) {
    stnet_status s = stnet_synth(synth_out.c_str(), synth_n, synth_size, synth_seed, synth_rate);
    if (s != STNET_OK) return fail(s);
    std::printf("wrote %d samples to %s\n", synth_n, synth_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    ConfigHandle h;
    if (int rc = apply_config(h, train_config, train_sets)) return rc;
    if (train_seed >= 0) {
      stnet_status s = stnet_config_set(h.cfg, "train.seed", std::to_string(train_seed).c_str());
      if (s != STNET_OK) return fail(s);
    }
    stnet_status s = stnet_train(h.cfg, train_data.c_str(), train_out.c_str());
    if (s != STNET_OK) return fail(s);
    std::printf("training complete; checkpoints in %s\n", train_out.c_str());
    return 0;
  }

  if (eval->parsed()) {
    stnet_scores scores{};
    stnet_status s = stnet_evaluate(eval_ckpt.c_str(), eval_data.c_str(), eval_split.c_str(),
                                    eval_report.empty() ? nullptr : eval_report.c_str(), &scores);
    if (s != STNET_OK) return fail(s);
    std::printf("f1: %.6f\nprecision: %.6f\nrecall: %.6f\niou: %.6f\noa: %.6f\n", scores.f1,
                scores.precision, scores.recall, scores.iou, scores.oa);
    return 0;
  }

  if (predict->parsed()) {
    if (!pr_overlay.empty() && pr_label.empty())
      return usage_fail("--out-overlay requires --label");
    stnet_status s = stnet_predict(pr_ckpt.c_str(), pr_a.c_str(), pr_b.c_str(), pr_mask.c_str(),
                                   pr_prob.empty() ? nullptr : pr_prob.c_str(),
                                   pr_label.empty() ? nullptr : pr_label.c_str(),
                                   pr_overlay.empty() ? nullptr : pr_overlay.c_str());
    if (s != STNET_OK) return fail(s);
    std::printf("wrote %s\n", pr_mask.c_str());
    return 0;
  }

  if (profile->parsed()) {
    ConfigHandle h;
    if (int rc = apply_config(h, prof_config, prof_sets)) return rc;
    char* report = nullptr;
    stnet_status s = stnet_profile(h.cfg, prof_size, prof_size, &report);
    if (s != STNET_OK) return fail(s);
    std::fputs(report, stdout);
    stnet_string_free(report);
    return 0;
  }

  return usage_fail("no subcommand");
}
