#ifndef JAWS_H
#define JAWS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Outcome of an FFI call.
typedef enum JawsStatus {
  JAWS_STATUS_OK = 0,
  JAWS_STATUS_NULL_POINTER = 1,
  JAWS_STATUS_INVALID_ARGUMENT = 2,
  JAWS_STATUS_SHAPE_MISMATCH = 3,
  JAWS_STATUS_IO = 4,
  JAWS_STATUS_FORMAT = 5,
  JAWS_STATUS_NUMERICAL = 6,
  JAWS_STATUS_UNSUPPORTED = 7,
  JAWS_STATUS_PANIC = 8,
} JawsStatus;

// A set of solver trajectories read from a dataset container.
typedef struct JawsDataset JawsDataset;

// A trained or freshly initialized surrogate.
typedef struct JawsModel JawsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *jaws_version(void);

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *jaws_last_error_message(void);

// Loads a checkpoint container.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum JawsStatus jaws_model_load(const char *path, struct JawsModel **out);

// Creates an untrained model without an uncertainty head. Fresh models map every
// state to itself.
//
// # Safety
// `out` must be a writable pointer.
enum JawsStatus jaws_model_init(size_t grid,
                                size_t channels,
                                size_t kernel,
                                size_t depth,
                                uint64_t seed,
                                struct JawsModel **out);

// # Safety
// `model` must come from this library and not be used afterwards. Null is ignored.
void jaws_model_free(struct JawsModel *model);

// # Safety
// `model` must be a live handle and `out` writable.
enum JawsStatus jaws_model_grid_size(const struct JawsModel *model, size_t *out);

// One model step `u -> out`, both of length `n` equal to the model grid.
//
// # Safety
// `u` and `out` must hold `n` doubles.
enum JawsStatus jaws_model_step(const struct JawsModel *model,
                                const double *u,
                                double *out,
                                size_t n);

// Closed-loop rollout of `steps` model steps from `u0`. State `t` (1-based) is written to
// `out[(t - 1) * n ..]`. A non-finite state stops the rollout with `JAWS_STATUS_NUMERICAL`
// after the states before it have been written.
//
// # Safety
// `u0` must hold `n` doubles and `out` `steps * n`.
enum JawsStatus jaws_model_rollout(const struct JawsModel *model,
                                   const double *u0,
                                   size_t n,
                                   size_t steps,
                                   double *out);

// Largest eigenvalue modulus of the one-step Jacobian at `u`.
//
// # Safety
// `u` must hold `n` doubles; `radius` and `converged` must be writable.
enum JawsStatus jaws_model_spectral_radius(const struct JawsModel *model,
                                           const double *u,
                                           size_t n,
                                           size_t iters,
                                           uint64_t seed,
                                           double *radius,
                                           bool *converged);

// Local Jacobian precision `exp(-s2(x))` at `u`. Models without a spatial uncertainty
// head return `JAWS_STATUS_UNSUPPORTED`.
//
// # Safety
// `u` and `out` must hold `n` doubles.
enum JawsStatus jaws_model_weight_map(const struct JawsModel *model,
                                      const double *u,
                                      size_t n,
                                      double *out);

// Loads a dataset container.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum JawsStatus jaws_dataset_load(const char *path, struct JawsDataset **out);

// # Safety
// `dataset` must come from this library and not be used afterwards. Null is ignored.
void jaws_dataset_free(struct JawsDataset *dataset);

// Trajectory count, states per trajectory and grid size.
//
// # Safety
// All output pointers must be writable.
enum JawsStatus jaws_dataset_shape(const struct JawsDataset *dataset,
                                   size_t *trajectories,
                                   size_t *states,
                                   size_t *grid);

// Copies state `step` of trajectory `trajectory` into `out` and its viscosity into `nu`
// when `nu` is not null.
//
// # Safety
// `out` must hold `n` doubles.
enum JawsStatus jaws_dataset_state(const struct JawsDataset *dataset,
                                   size_t trajectory,
                                   size_t step,
                                   double *out,
                                   size_t n,
                                   double *nu);

// Integrates Burgers from `u0` and writes `steps + 1` states (the first is `u0`) spaced
// `dt` apart into `out`, each advanced with `substeps` inner steps.
//
// # Safety
// `u0` must hold `n` doubles and `out` `(steps + 1) * n`.
enum JawsStatus jaws_solver_integrate(const double *u0,
                                      size_t n,
                                      double nu,
                                      double dt,
                                      size_t substeps,
                                      size_t steps,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JAWS_H */
