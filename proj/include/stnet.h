/*
 * stnet — bi-temporal change detection: dataset preparation, synthetic data
 * generation, training, evaluation, prediction and model profiling.
 *
 * C interface for the shared library. All functions return stnet_status;
 * on failure stnet_last_error() holds a message for the calling thread.
 * Status values match the CLI exit codes.
 */

#ifndef STNET_H
#define STNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define STNET_API __declspec(dllexport)
#else
#define STNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stnet_status {
  STNET_OK = 0,
  STNET_ERR_USAGE = 1,
  STNET_ERR_DATA = 2,
  STNET_ERR_NUMERIC = 3
} stnet_status;

/* Opaque run configuration: defaults < JSON file < key overrides. */
typedef struct stnet_config stnet_config;

typedef struct stnet_scores {
  double f1;
  double precision;
  double recall;
  double iou;
  double oa;
} stnet_scores;

STNET_API const char* stnet_version(void);

/* Message for the most recent failure on this thread; empty if none. */
STNET_API const char* stnet_last_error(void);

STNET_API stnet_config* stnet_config_create(void);
STNET_API void stnet_config_free(stnet_config* cfg);
STNET_API stnet_status stnet_config_load_file(stnet_config* cfg, const char* path);
/* dotted key, e.g. stnet_config_set(cfg, "train.seed", "7") */
STNET_API stnet_status stnet_config_set(stnet_config* cfg, const char* key, const char* value);
/* JSON text of the effective configuration; free with stnet_string_free */
STNET_API char* stnet_config_dump(const stnet_config* cfg);
STNET_API void stnet_string_free(char* s);

/* Deterministic synthetic dataset with train/val/test splits (70/15/15). */
STNET_API stnet_status stnet_synth(const char* out_dir, int n, int size, uint64_t seed,
                                   double change_rate);

/* Tiles a co-registered raster triplet; *tile_count_out receives the count. */
STNET_API stnet_status stnet_tile(const char* a_path, const char* b_path, const char* label_path,
                                  int size, int stride, const char* out_dir, int* tile_count_out);

/* Trains on data_root, writing config.json, train_log.jsonl, best.ckpt and
 * last.ckpt under out_dir. */
STNET_API stnet_status stnet_train(const stnet_config* cfg, const char* data_root,
                                   const char* out_dir);

/* Evaluates a checkpoint on one dataset split. report_path and scores_out
 * may each be NULL. */
STNET_API stnet_status stnet_evaluate(const char* checkpoint_path, const char* data_root,
                                      const char* split, const char* report_path,
                                      stnet_scores* scores_out);

/* Single forward pass over an image pair. mask_out is required; prob_out
 * (16-bit PGM of the changed-class probability), label_path and overlay_out
 * are optional (overlay requires the label). */
STNET_API stnet_status stnet_predict(const char* checkpoint_path, const char* a_path,
                                     const char* b_path, const char* mask_out,
                                     const char* prob_out, const char* label_path,
                                     const char* overlay_out);

/* Parameter/FLOP report for the configured model at the given input size;
 * free *report_out with stnet_string_free. */
STNET_API stnet_status stnet_profile(const stnet_config* cfg, int in_h, int in_w,
                                     char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* STNET_H */
