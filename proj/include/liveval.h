/* C interface to the liveval data-valuation library.
 *
 * Every function returns an lv_status. On failure, lv_last_error() returns a
 * message for the calling thread that stays valid until its next call.
 * Handles are opaque and owned by the caller once returned.
 */
#ifndef LIVEVAL_H
#define LIVEVAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LV_API __declspec(dllexport)
#else
#define LV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2-4 double as CLI exit codes. */
typedef enum lv_status {
  LV_OK = 0,
  LV_ERR_INTERNAL = 1,
  LV_ERR_CONFIG = 2,
  LV_ERR_NUMERIC = 3,
  LV_ERR_IO = 4,
  LV_ERR_PARAMETER = 5,
  LV_ERR_FORMAT = 6
} lv_status;

typedef struct lv_config lv_config;
typedef struct lv_dataset lv_dataset;

LV_API const char *lv_version(void);
LV_API const char *lv_last_error(void);
/* CLI exit code for a status: 0, 2 (config), 3 (numeric), 4 (I/O) or 1. */
LV_API int lv_exit_code(lv_status status);

/* Experiment configuration. */
LV_API lv_status lv_config_default(lv_config **out);
LV_API lv_status lv_config_load(const char *path, lv_config **out);
LV_API lv_status lv_config_parse(const char *json, lv_config **out);
LV_API lv_status lv_config_set_seed(lv_config *config, uint64_t seed);
LV_API lv_status lv_config_set_out_dir(lv_config *config, const char *dir);
/* Canonical JSON of the config; the string is owned by the handle. */
LV_API const char *lv_config_json(const lv_config *config);
LV_API const char *lv_config_out_dir(const lv_config *config);
LV_API void lv_config_free(lv_config *config);

/* Subcommands. Each writes its outputs under out_dir (NULL: config value). */
LV_API lv_status lv_run_corrupt(const lv_config *config, const char *out_dir);
LV_API lv_status lv_run_train_value(const lv_config *config, const char *out_dir);
/* method: "loo", "if" or "gradnd". */
LV_API lv_status lv_run_baseline(const lv_config *config, const char *method,
                                 const char *out_dir);
LV_API lv_status lv_run_report(const lv_config *config, const char *out_dir);
LV_API lv_status lv_run_probe_volatility(const lv_config *config, const char *out_dir);

/* Datasets. */
LV_API lv_status lv_dataset_synth_blobs(uint64_t seed, size_t n_per_class, size_t n_classes,
                                        size_t dim, double separation, lv_dataset **out);
LV_API lv_status lv_dataset_load_csv(const char *path, const char *label_column,
                                     lv_dataset **out);
LV_API lv_status lv_dataset_load_idx(const char *images, const char *labels,
                                     lv_dataset **out);
LV_API lv_status lv_dataset_save_csv(const lv_dataset *ds, const char *path);
LV_API lv_status lv_dataset_shape(const lv_dataset *ds, size_t *n, size_t *f, size_t *c);
/* Label-flip (kind 0) or feature-noise (kind 1) corruption into a new handle. */
LV_API lv_status lv_dataset_corrupt(const lv_dataset *ds, int kind, size_t count,
                                    int source_class, int target_class, double sigma,
                                    uint64_t seed, lv_dataset **out);
LV_API lv_status lv_dataset_mask(const lv_dataset *ds, uint8_t *mask, size_t n);
LV_API void lv_dataset_free(lv_dataset *ds);

/* Primitives. */
LV_API lv_status lv_step_value(double delta_norm, double u_norm, double *out);
/* Counts corrupted[i] != 0 among the k lowest values (ties: lower id first). */
LV_API lv_status lv_detection_metric(const uint64_t *ids, const double *values,
                                     const uint8_t *corrupted, size_t pool_size, size_t k,
                                     size_t *detected);

#ifdef __cplusplus
}
#endif

#endif /* LIVEVAL_H */
