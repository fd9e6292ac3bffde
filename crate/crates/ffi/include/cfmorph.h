#ifndef CFMORPH_H
#define CFMORPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CfmStatus {
  CFM_STATUS_OK = 0,
  CFM_STATUS_NULL_POINTER = 1,
  CFM_STATUS_INVALID_INPUT = 2,
  CFM_STATUS_FORMAT = 3,
  CFM_STATUS_CONFIG = 4,
  CFM_STATUS_NON_FINITE = 5,
  CFM_STATUS_IO = 6,
  CFM_STATUS_PANIC = 7,
} CfmStatus;

/**
 * Counterfactual volume, lattice and trace of one attack.
 */
typedef struct CfmAttackResult CfmAttackResult;

/**
 * One trained classifier.
 */
typedef struct CfmClassifier CfmClassifier;

/**
 * A frozen classifier ensemble.
 */
typedef struct CfmEnsemble CfmEnsemble;

/**
 * A dense occupancy volume.
 */
typedef struct CfmVolume CfmVolume;

/**
 * Attack settings. Fill with [`cfm_attack_params_default`] and then adjust.
 */
typedef struct CfmAttackParams {
  /**
   * 0 = male, 1 = female.
   */
  uint8_t target;
  size_t steps;
  double lr;
  double gamma;
  double tau;
  double lambda_smooth;
  double lambda_bend;
  /**
   * Lattice cells per axis; 0 picks the default for the input size.
   */
  size_t cells;
  bool freeze_posterior;
  /**
   * Cosine annealing when true, constant rate otherwise.
   */
  bool cosine;
  uint64_t seed;
} CfmAttackParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded. Valid until the next `cfm_*` call on this thread.
 */
const char *cfm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cfm_version(void);

/**
 * Copies `len` voxels (x fastest) into a new volume.
 *
 * # Safety
 * `dims` must point to 3 values, `data` to `len` values, `out` to writable storage.
 */
enum CfmStatus cfm_volume_new(const size_t *dims,
                              const double *data,
                              size_t len,
                              struct CfmVolume **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CfmStatus cfm_volume_read(const char *path, struct CfmVolume **out);

/**
 * # Safety
 * `v` must be a live handle and `path` a NUL-terminated string.
 */
enum CfmStatus cfm_volume_write(const struct CfmVolume *v, const char *path);

/**
 * # Safety
 * `v` must be a live handle and `out` must point to 3 writable values.
 */
enum CfmStatus cfm_volume_dims(const struct CfmVolume *v, size_t *out);

/**
 * Copies the voxels into `out`, which must hold exactly the voxel count.
 *
 * # Safety
 * `v` must be a live handle and `out` must point to `len` writable values.
 */
enum CfmStatus cfm_volume_copy_data(const struct CfmVolume *v, double *out, size_t len);

/**
 * # Safety
 * `v` must be null or a handle not yet freed.
 */
void cfm_volume_free(struct CfmVolume *v);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CfmStatus cfm_classifier_read(const char *path, struct CfmClassifier **out);

/**
 * # Safety
 * `m` and `v` must be live handles and `out` writable.
 */
enum CfmStatus cfm_classifier_logit(const struct CfmClassifier *m,
                                    const struct CfmVolume *v,
                                    double *out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void cfm_classifier_free(struct CfmClassifier *m);

/**
 * Builds an ensemble from copies of `count` classifiers. With `flip` each
 * member also scores the mirrored input.
 *
 * # Safety
 * `members` must point to `count` live classifier handles and `out` be writable.
 */
enum CfmStatus cfm_ensemble_new(const struct CfmClassifier *const *members,
                                size_t count,
                                bool flip,
                                struct CfmEnsemble **out);

/**
 * Number of logits the ensemble produces per volume.
 *
 * # Safety
 * `e` must be a live handle and `out` writable.
 */
enum CfmStatus cfm_ensemble_logit_count(const struct CfmEnsemble *e, size_t *out);

/**
 * Writes the ensemble logits; `len` must equal the logit count.
 *
 * # Safety
 * `e` and `v` must be live handles and `out` must point to `len` writable values.
 */
enum CfmStatus cfm_ensemble_logits(const struct CfmEnsemble *e,
                                   const struct CfmVolume *v,
                                   double *out,
                                   size_t len);

/**
 * # Safety
 * `e` must be null or a handle not yet freed.
 */
void cfm_ensemble_free(struct CfmEnsemble *e);

/**
 * Default settings for an attack towards `target` (0 = male, 1 = female).
 *
 * # Safety
 * `out` must be writable.
 */
enum CfmStatus cfm_attack_params_default(uint8_t target, struct CfmAttackParams *out);

/**
 * Runs the attack. `params` may be null for the defaults towards female.
 *
 * # Safety
 * `v` and `e` must be live handles, `params` null or valid, `out` writable.
 */
enum CfmStatus cfm_attack_run(const struct CfmVolume *v,
                              const struct CfmEnsemble *e,
                              const struct CfmAttackParams *params,
                              struct CfmAttackResult **out);

/**
 * A new volume handle holding the counterfactual.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum CfmStatus cfm_attack_result_volume(const struct CfmAttackResult *r, struct CfmVolume **out);

/**
 * Number of trace entries (steps + 1).
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum CfmStatus cfm_attack_result_trace_len(const struct CfmAttackResult *r, size_t *out);

/**
 * Total loss recorded at `step`.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum CfmStatus cfm_attack_result_total_loss(const struct CfmAttackResult *r,
                                            size_t step,
                                            double *out);

/**
 * Bending energy of the final deformation.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum CfmStatus cfm_attack_result_bending(const struct CfmAttackResult *r, double *out);

/**
 * # Safety
 * `r` must be a live handle and `path` a NUL-terminated string.
 */
enum CfmStatus cfm_attack_result_write_lattice(const struct CfmAttackResult *r, const char *path);

/**
 * # Safety
 * `r` must be a live handle and `path` a NUL-terminated string.
 */
enum CfmStatus cfm_attack_result_write_trace(const struct CfmAttackResult *r, const char *path);

/**
 * # Safety
 * `r` must be null or a handle not yet freed.
 */
void cfm_attack_result_free(struct CfmAttackResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFMORPH_H */
