#ifndef BEAMCAST_H
#define BEAMCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BcStatus {
  BC_STATUS_OK = 0,
  BC_STATUS_NULL_POINTER = 1,
  BC_STATUS_INVALID_ARGUMENT = 2,
  BC_STATUS_DOMAIN = 3,
  BC_STATUS_CONFIG = 4,
  BC_STATUS_FORMAT = 5,
  BC_STATUS_IO = 6,
  BC_STATUS_MISSING_PREDICTION = 7,
  BC_STATUS_NOT_CONVERGED = 8,
  BC_STATUS_BUFFER_TOO_SMALL = 9,
  BC_STATUS_PANIC = 99,
} BcStatus;

typedef enum BcPowerMode {
  BC_POWER_MODE_SUM_RATE = 0,
  BC_POWER_MODE_SELFISH = 1,
} BcPowerMode;

typedef enum BcInterference {
  BC_INTERFERENCE_OWN_CHANNEL = 0,
  BC_INTERFERENCE_PRINTED = 1,
} BcInterference;

typedef struct BcAllocation BcAllocation;

typedef struct BcChannels BcChannels;

typedef struct BcConfig BcConfig;

typedef struct BcDataset BcDataset;

typedef struct BcPredictions BcPredictions;

/**
 * Shape of a dataset or prediction file.
 */
typedef struct BcLayout {
  size_t ues;
  size_t high_rows;
  size_t high_cols;
  size_t low_rows;
  size_t low_cols;
  size_t window;
  size_t frames;
  uint64_t seed;
} BcLayout;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message. Semantics of `buf`,
 * `capacity` and `needed` as in [`bc_config_to_toml`].
 *
 * # Safety
 * `buf` must hold `capacity` bytes; `needed` must be null or writable.
 */
enum BcStatus bc_last_error_message(char *buf, size_t capacity, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bc_version(void);

/**
 * New handle holding the default configuration.
 */
struct BcConfig *bc_config_default(void);

/**
 * Parse and validate a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum BcStatus bc_config_from_toml(const char *toml, struct BcConfig **out);

/**
 * Serialize a configuration to TOML. With `buf == NULL` and `capacity == 0`
 * only `needed` is filled, so callers can size the buffer first.
 *
 * # Safety
 * `cfg` must be a live handle; `buf` must hold `capacity` bytes; `needed`
 * must be null or writable.
 */
enum BcStatus bc_config_to_toml(const struct BcConfig *cfg,
                                char *buf,
                                size_t capacity,
                                size_t *needed);

/**
 * # Safety
 * `cfg` must be null or a handle from this library, not used afterwards.
 */
void bc_config_free(struct BcConfig *cfg);

/**
 * Synthesize the scenario for `seed` and sweep it into a dataset.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum BcStatus bc_dataset_generate(const struct BcConfig *cfg,
                                  uint64_t seed,
                                  struct BcDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BcStatus bc_dataset_read(const char *path, struct BcDataset **out);

/**
 * # Safety
 * `ds` must be a live handle; `path` must be a NUL-terminated string.
 */
enum BcStatus bc_dataset_write(const struct BcDataset *ds, const char *path);

/**
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum BcStatus bc_dataset_layout(const struct BcDataset *ds, struct BcLayout *out);

/**
 * High-resolution power image (`real^2 + imag^2`, row-major) of one
 * `(ue, frame)` record.
 *
 * # Safety
 * `ds` must be a live handle; `out` must hold `capacity` doubles.
 */
enum BcStatus bc_dataset_power_image(const struct BcDataset *ds,
                                     size_t ue,
                                     size_t frame,
                                     double *out,
                                     size_t capacity);

/**
 * # Safety
 * `ds` must be null or a handle from this library, not used afterwards.
 */
void bc_dataset_free(struct BcDataset *ds);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BcStatus bc_predictions_read(const char *path, struct BcPredictions **out);

/**
 * # Safety
 * `pred` must be a live handle; `out` must be writable.
 */
enum BcStatus bc_predictions_layout(const struct BcPredictions *pred, struct BcLayout *out);

/**
 * Predicted power image (row-major) for `(ue, frame)`.
 *
 * # Safety
 * `pred` must be a live handle; `out` must hold `capacity` doubles.
 */
enum BcStatus bc_predictions_power_image(const struct BcPredictions *pred,
                                         size_t ue,
                                         size_t frame,
                                         double *out,
                                         size_t capacity);

/**
 * # Safety
 * `pred` must be null or a handle from this library, not used afterwards.
 */
void bc_predictions_free(struct BcPredictions *pred);

/**
 * Closed-form probability that `k - gamma` UEs drawing from a top-m list
 * pick distinct beams. `certain_conflict` is set to 1 when `k - gamma > m`.
 *
 * # Safety
 * `probability` and `certain_conflict` must be writable.
 */
enum BcStatus bc_conflict_probability(size_t m,
                                      size_t k,
                                      size_t gamma,
                                      double *probability,
                                      uint8_t *certain_conflict);

/**
 * Monte-Carlo estimate of [`bc_conflict_probability`].
 *
 * # Safety
 * `probability` must be writable.
 */
enum BcStatus bc_conflict_probability_mc(size_t m,
                                         size_t k,
                                         size_t gamma,
                                         uint64_t trials,
                                         uint64_t seed,
                                         double *probability);

/**
 * Power allocation for a fixed beam assignment. `coupling` is the `k x k`
 * row-major matrix whose entry `(j, l)` multiplies `p_l` in UE j's SINR.
 * Writes `k` powers (watts) and the water level.
 *
 * # Safety
 * `coupling` must hold `k * k` doubles, `power` must hold `k`, `mu` must be
 * null or writable.
 */
enum BcStatus bc_power_allocate(size_t k,
                                const double *coupling,
                                double p_max,
                                double n0,
                                enum BcPowerMode mode,
                                double *power,
                                double *mu);

/**
 * Effective channels from nonnegative gains `|h_k^H w_b|^2`, `ues x beams`
 * row-major.
 *
 * # Safety
 * `gains` must hold `ues * beams` doubles; `out` must be writable.
 */
enum BcStatus bc_channels_from_gains(size_t ues,
                                     size_t beams,
                                     const double *gains,
                                     struct BcChannels **out);

/**
 * Oracle effective channels of every UE in frame `frame` of the scenario
 * generated from `cfg` and `seed`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum BcStatus bc_channels_oracle(const struct BcConfig *cfg,
                                 uint64_t seed,
                                 size_t frame,
                                 struct BcChannels **out);

/**
 * # Safety
 * `ch` must be a live handle; `ues`/`beams` must be null or writable.
 */
enum BcStatus bc_channels_shape(const struct BcChannels *ch, size_t *ues, size_t *beams);

/**
 * # Safety
 * `ch` must be null or a handle from this library, not used afterwards.
 */
void bc_channels_free(struct BcChannels *ch);

/**
 * Exhaustive beam assignment with per-candidate power allocation.
 *
 * # Safety
 * `ch` must be a live handle; `out` must be writable.
 */
enum BcStatus bc_enumerate_optimal(const struct BcChannels *ch,
                                   double p_max,
                                   double n0,
                                   enum BcInterference model,
                                   enum BcPowerMode mode,
                                   struct BcAllocation **out);

/**
 * Top-m policy. `rankings` holds, for each UE in turn, all `beams` beam
 * indices strongest first (`ues * beams` entries).
 *
 * # Safety
 * `ch` must be a live handle; `rankings` must hold `ues * beams` entries;
 * `out` must be writable.
 */
enum BcStatus bc_topm_allocate(const struct BcChannels *ch,
                               const size_t *rankings,
                               size_t m,
                               double p_max,
                               double n0,
                               enum BcInterference model,
                               enum BcPowerMode mode,
                               struct BcAllocation **out);

/**
 * Sum-rate in bits/s/Hz, or NaN for a null handle.
 *
 * # Safety
 * `a` must be null or a live handle.
 */
double bc_allocation_sum_rate(const struct BcAllocation *a);

/**
 * Number of UEs in the allocation, or 0 for a null handle.
 *
 * # Safety
 * `a` must be null or a live handle.
 */
size_t bc_allocation_ues(const struct BcAllocation *a);

/**
 * # Safety
 * `a` must be null or a live handle.
 */
uint64_t bc_allocation_combinations(const struct BcAllocation *a);

/**
 * Beam index per UE.
 *
 * # Safety
 * `a` must be a live handle; `out` must hold `capacity` entries.
 */
enum BcStatus bc_allocation_beams(const struct BcAllocation *a, size_t *out, size_t capacity);

/**
 * Transmit power per UE in watts.
 *
 * # Safety
 * `a` must be a live handle; `out` must hold `capacity` doubles.
 */
enum BcStatus bc_allocation_power(const struct BcAllocation *a, double *out, size_t capacity);

/**
 * # Safety
 * `a` must be null or a handle from this library, not used afterwards.
 */
void bc_allocation_free(struct BcAllocation *a);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMCAST_H */
