/* Stable C interface to the place library. Every function returns a
 * place_status; on failure place_last_error() describes the cause. Handles
 * are opaque and owned by the caller until passed to the matching _free. */
#ifndef PLACE_PLACE_H
#define PLACE_PLACE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PLACE_API __declspec(dllexport)
#else
#define PLACE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum place_status {
  PLACE_OK = 0,
  PLACE_ERR_ARGUMENT = 1,
  PLACE_ERR_CONFIG = 2,
  PLACE_ERR_IO = 3,
  PLACE_ERR_DIMENSION = 4,
  PLACE_ERR_CONTRACT = 5,
  PLACE_ERR_DOMAIN = 6,
  PLACE_ERR_NUMERIC = 7,
  PLACE_ERR_INTERNAL = 8
} place_status;

/* Message for the most recent failure on this thread; never NULL. */
PLACE_API const char* place_last_error(void);
PLACE_API const char* place_status_name(place_status status);

/* ---- configuration -------------------------------------------------------- */

typedef struct place_config place_config;

PLACE_API place_status place_config_load(const char* path, place_config** out);
PLACE_API place_status place_config_parse(const char* text, place_config** out);
/* Overrides one key with the same parsing rules as the config file. */
PLACE_API place_status place_config_set(place_config* cfg, const char* key, const char* value);
/* Writes the 64-char hex digest plus NUL into out (at least 65 bytes). */
PLACE_API place_status place_config_hash(const place_config* cfg, char* out, size_t out_len);
PLACE_API void place_config_free(place_config* cfg);

/* ---- training ------------------------------------------------------------- */

typedef struct place_train_summary {
  uint64_t best_epoch;
  double best_val;
  uint64_t last_epoch;
  int early_stopped;
} place_train_summary;

/* data_dir may be NULL, in which case splits are generated from the config.
 * stop_after_epoch < 0 runs to completion. summary may be NULL. */
PLACE_API place_status place_train(const place_config* cfg, const char* data_dir, const char* out_dir,
                                   int64_t stop_after_epoch, place_train_summary* summary);

/* Continues the run that wrote `checkpoint`, reading config.txt beside it. */
PLACE_API place_status place_resume(const char* checkpoint, const char* data_dir, int64_t stop_after_epoch,
                                    place_train_summary* summary);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct place_metrics place_metrics;

/* split is "train", "val" or "test". */
PLACE_API place_status place_eval(const char* checkpoint, const char* split, const char* data_dir,
                                  place_metrics** out);
PLACE_API size_t place_metrics_count(const place_metrics* m);
PLACE_API const char* place_metrics_name(const place_metrics* m, size_t i);
PLACE_API double place_metrics_value(const place_metrics* m, size_t i);
/* CSV with header metric,value,split,config_hash. */
PLACE_API place_status place_metrics_write_csv(const place_metrics* m, const char* path);
PLACE_API void place_metrics_free(place_metrics* m);

/* ---- data and diagnostics ------------------------------------------------- */

/* Writes train/val/test datasets and covariance target caches. */
PLACE_API place_status place_gen_data(const char* spec_path, const char* out_dir, size_t* pairs_written);

/* Gradient check of the total objective on two generated samples. */
PLACE_API place_status place_grad_check(const place_config* cfg, double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif
