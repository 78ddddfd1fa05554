#ifndef DYNACT_H
#define DYNACT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Pipeline stages accepted by [`dynact_run_stage`].
 */
typedef enum {
  DYNACT_STAGE_SIMULATE = 0,
  DYNACT_STAGE_SOLVE_MOTION = 1,
  DYNACT_STAGE_RECONSTRUCT = 2,
  DYNACT_STAGE_EVALUATE = 3,
  DYNACT_STAGE_ALL = 4,
} DynactStage;

/**
 * Result codes. Values 2 to 5 match the exit codes of the `dynact` tool.
 */
typedef enum {
  DYNACT_STATUS_OK = 0,
  DYNACT_STATUS_CONFIG = 2,
  DYNACT_STATUS_IO = 3,
  DYNACT_STATUS_SOLVER = 4,
  DYNACT_STATUS_MISMATCH = 5,
  DYNACT_STATUS_NULL_POINTER = 10,
  DYNACT_STATUS_INVALID_UTF8 = 11,
  DYNACT_STATUS_INVALID_STAGE = 12,
  DYNACT_STATUS_PANIC = 13,
} DynactStatus;

/**
 * Validated pipeline configuration.
 */
typedef struct DynactConfig DynactConfig;

/**
 * Row-major image, rows ordered by increasing y.
 */
typedef struct DynactImage DynactImage;

/**
 * Sinogram, one row of detector values per view.
 */
typedef struct DynactSinogram DynactSinogram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *dynact_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dynact_version(void);

/**
 * Largest stable explicit time step for the elastic solver.
 */
double dynact_cfl_dt(double lambda, double mu, double rho, double dx, double dy, double safety);

/**
 * Read and validate a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
DynactStatus dynact_config_load(const char *path, DynactConfig **out);

/**
 * Parse and validate a configuration from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
DynactStatus dynact_config_from_json(const char *json, DynactConfig **out);

/**
 * Replace the random seed.
 *
 * # Safety
 * `cfg` must be a live handle or NULL.
 */
DynactStatus dynact_config_set_seed(DynactConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be NULL or a handle not freed before.
 */
void dynact_config_free(DynactConfig *cfg);

/**
 * Run one pipeline stage with outputs in `out_dir`; NULL uses the
 * configured output directory.
 *
 * # Safety
 * `cfg` must be a live handle; `out_dir` NULL or a NUL-terminated string.
 */
DynactStatus dynact_run_stage(const DynactConfig *cfg, int32_t stage, const char *out_dir);

/**
 * Analytic dynamic sinogram of the configured phantom and motion.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a writable pointer.
 */
DynactStatus dynact_simulate(const DynactConfig *cfg, DynactSinogram **out);

/**
 * Number of views and detector bins.
 *
 * # Safety
 * `sino` must be a live handle; the out pointers may be NULL.
 */
DynactStatus dynact_sinogram_dims(const DynactSinogram *sino,
                                  size_t *num_angles,
                                  size_t *num_detectors);

/**
 * Pointer to `num_angles * num_detectors` values, or NULL for a NULL handle.
 *
 * # Safety
 * `sino` must be NULL or a live handle; the data lives as long as the handle.
 */
const double *dynact_sinogram_data(const DynactSinogram *sino);

/**
 * # Safety
 * `sino` must be NULL or a handle not freed before.
 */
void dynact_sinogram_free(DynactSinogram *sino);

/**
 * Filtered backprojection on the configured image grid; with
 * `compensate` nonzero the configured analytic motion is compensated.
 *
 * # Safety
 * `cfg` and `sino` must be live handles and `out` a writable pointer.
 */
DynactStatus dynact_reconstruct(const DynactConfig *cfg,
                                const DynactSinogram *sino,
                                int32_t compensate,
                                DynactImage **out);

/**
 * Read an image file written by the pipeline.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
DynactStatus dynact_image_read(const char *path, DynactImage **out);

/**
 * Pixel counts along x and y.
 *
 * # Safety
 * `img` must be a live handle; the out pointers may be NULL.
 */
DynactStatus dynact_image_dims(const DynactImage *img, size_t *nx, size_t *ny);

/**
 * Pointer to `nx * ny` values, or NULL for a NULL handle.
 *
 * # Safety
 * `img` must be NULL or a live handle; the data lives as long as the handle.
 */
const double *dynact_image_data(const DynactImage *img);

/**
 * Root-mean-square difference of two images on the same grid.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` a writable pointer.
 */
DynactStatus dynact_image_rmse(const DynactImage *a, const DynactImage *b, double *out);

/**
 * # Safety
 * `img` must be NULL or a handle not freed before.
 */
void dynact_image_free(DynactImage *img);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNACT_H */
