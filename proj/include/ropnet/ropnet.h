/*
 * ropnet: partial-to-partial rigid point cloud registration.
 *
 * C API over the shared library. All objects are opaque handles; every
 * fallible call returns a ropnet_status and leaves a human-readable message
 * in ropnet_last_error() (thread-local) on failure.
 *
 * Rigid transforms cross this boundary as 12 doubles: the 3x3 rotation in
 * row-major order followed by the translation vector. Points transform as
 * x' = R x + t.
 */
#ifndef ROPNET_H
#define ROPNET_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Mirrors the CLI exit codes. */
typedef enum ropnet_status {
    ROPNET_OK = 0,
    ROPNET_ERROR_USAGE = 1,   /* bad arguments or configuration */
    ROPNET_ERROR_DATA = 2,    /* missing/corrupt files, format or version mismatch */
    ROPNET_ERROR_NUMERIC = 3  /* degenerate geometry, non-finite values */
} ropnet_status;

typedef struct ropnet_config ropnet_config;
typedef struct ropnet_cloud ropnet_cloud;
typedef struct ropnet_model ropnet_model;

const char* ropnet_version(void);
const char* ropnet_last_error(void);

/* ---- configuration (flat key=value; defaults < file < explicit sets) ---- */

ropnet_config* ropnet_config_new(void);
void ropnet_config_free(ropnet_config* cfg);
ropnet_status ropnet_config_set(ropnet_config* cfg, const char* key, const char* value);
/* Returns NULL for unknown keys. The pointer is valid until the next call
 * on this config. */
const char* ropnet_config_get(const ropnet_config* cfg, const char* key);
ropnet_status ropnet_config_load(ropnet_config* cfg, const char* path);
ropnet_status ropnet_config_save(const ropnet_config* cfg, const char* path);
/* Applies environment overrides (ROPNET_SEED). */
ropnet_status ropnet_config_apply_env(ropnet_config* cfg);

/* ---- point clouds -------------------------------------------------------- */

/* Copies count*3 coordinates (and optionally normals). */
ropnet_cloud* ropnet_cloud_new(const double* xyz, size_t count, const double* normals);
void ropnet_cloud_free(ropnet_cloud* cloud);
size_t ropnet_cloud_size(const ropnet_cloud* cloud);
const double* ropnet_cloud_points(const ropnet_cloud* cloud);
/* NULL when the cloud has no normals. */
const double* ropnet_cloud_normals(const ropnet_cloud* cloud);
/* ASCII ("x y z [nx ny nz]", '#' comments) or the binary container;
 * the format is auto-detected on load. */
ropnet_status ropnet_cloud_load(const char* path, ropnet_cloud** out);
ropnet_status ropnet_cloud_save(const ropnet_cloud* cloud, const char* path, int binary);
ropnet_status ropnet_cloud_estimate_normals(ropnet_cloud* cloud, int k);
ropnet_status ropnet_cloud_transform(ropnet_cloud* cloud, const double rt[12]);

/* ---- synthetic dataset --------------------------------------------------- */

ropnet_status ropnet_generate_dataset(const ropnet_config* cfg, const char* out_dir,
                                      long num_samples);

/* ---- model --------------------------------------------------------------- */

/* Fresh parameters initialized from the config seed and architecture. */
ropnet_status ropnet_model_new(const ropnet_config* cfg, ropnet_model** out);
void ropnet_model_free(ropnet_model* model);
/* The checkpoint must match the architecture described by the config. */
ropnet_status ropnet_model_load(const char* checkpoint_path, const ropnet_config* cfg,
                                ropnet_model** out);
ropnet_status ropnet_model_save(const ropnet_model* model, const char* checkpoint_path);

/* ---- training and evaluation --------------------------------------------- */

/* Trains on the dataset directory; writes loss_log.csv, checkpoints and the
 * resolved config into run_dir. */
ropnet_status ropnet_train(ropnet_model* model, const ropnet_config* cfg,
                           const char* data_dir, const char* run_dir);

typedef struct ropnet_eval_summary {
    long count;
    long gimbal_excluded;
    double error_r_deg;
    double error_t;
    double mae_r_deg;
    double mae_t;
    double cg_precision_05, cg_recall_05;
    double cg_precision_07, cg_recall_07;
    double post_precision_05, post_recall_05;
    double post_precision_07, post_recall_07;
    double mean_millis;
} ropnet_eval_summary;

/* Evaluates on the dataset directory; writes per-sample CSV and a JSON
 * aggregate into out_dir (when non-NULL). Either summary pointer may be
 * NULL. ICP rows are produced when with_icp is nonzero. */
ropnet_status ropnet_evaluate(ropnet_model* model, const ropnet_config* cfg,
                              const char* data_dir, const char* out_dir, int with_icp,
                              int oracle_gt, ropnet_eval_summary* out_summary,
                              ropnet_eval_summary* out_icp_summary);

/* ---- single-pair registration -------------------------------------------- */

/* iters < 0 uses the config's test_iters. Both clouds need normals (estimate
 * them first if absent). */
ropnet_status ropnet_register_pair(ropnet_model* model, const ropnet_config* cfg,
                                   const ropnet_cloud* source, const ropnet_cloud* target,
                                   int iters, int identity_init, int skip_tfmr,
                                   double rt_out[12]);

ropnet_status ropnet_icp(const ropnet_cloud* source, const ropnet_cloud* target,
                         int max_iter, double tol, double rt_out[12]);

/* Error(R)/Error(t)/MAE(R)/MAE(t) of a prediction against a ground truth.
 * gimbal is set when MAE(R) is undefined (Euler decomposition at the
 * singularity); any output pointer may be NULL. */
ropnet_status ropnet_transform_errors(const double rt_pred[12], const double rt_gt[12],
                                      double* error_r_deg, double* error_t,
                                      double* mae_r_deg, double* mae_t, int* gimbal);

/* ---- ablation sweep ------------------------------------------------------- */

/* knob: one of iters, n1, prob, topk, m1. values_csv: comma-separated list.
 * Writes a tidy CSV (knob, value, error_r, error_t) to out_csv. */
ropnet_status ropnet_sweep(ropnet_model* model, const ropnet_config* cfg,
                           const char* data_dir, const char* knob, const char* values_csv,
                           const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* ROPNET_H */
