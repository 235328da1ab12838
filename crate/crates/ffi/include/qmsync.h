#ifndef QMSYNC_H
#define QMSYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QmsStatus {
  QMS_STATUS_OK = 0,
  QMS_STATUS_NULL_POINTER = 1,
  QMS_STATUS_INVALID_PARAMETER = 2,
  QMS_STATUS_PARSE_ERROR = 3,
  QMS_STATUS_UNSUPPORTED = 4,
  QMS_STATUS_RESOURCE_LIMIT = 5,
  QMS_STATUS_CONVERGENCE_FAILURE = 6,
  QMS_STATUS_NO_DATA = 7,
  QMS_STATUS_DEGENERATE_GRID = 8,
  QMS_STATUS_AXIS_MISMATCH = 9,
  QMS_STATUS_IO = 10,
  QMS_STATUS_INVALID_UTF8 = 11,
  QMS_STATUS_PANIC = 12,
} QmsStatus;

typedef enum QmsNormalization {
  QMS_NORMALIZATION_PER_ATTEMPT_FRAME = 0,
  QMS_NORMALIZATION_PER_N_SLOTS = 1,
} QmsNormalization;

// Opaque experiment configuration.
typedef struct QmsConfig QmsConfig;

// Opaque Monte Carlo result.
typedef struct QmsSimStats QmsSimStats;

// Plain-data view of a Monte Carlo result.
typedef struct QmsSimSummary {
  uint64_t n_frames;
  uint64_t herald_counts_a;
  uint64_t herald_counts_b;
  uint64_t sync_successes;
  uint64_t single_pair_deliveries;
  uint64_t coincidence_count;
  double mean_storage_cycles;
  double sync_rate;
  double sync_rate_se;
  double single_pair_rate;
  double single_pair_rate_se;
} QmsSimSummary;

// Gains, QBERs (negative when undefined) and bound offsets of one run.
typedef struct QmsQkdStats {
  double gain_z;
  double gain_x;
  double qber_z;
  double qber_x;
  double delta_gain_z;
  double delta_gain_x;
  double delta_qber_z;
  double delta_qber_x;
  uint64_t n_pulses;
} QmsQkdStats;

typedef struct QmsKeyRate {
  double rate_per_pulse;
  double gain_z_lower;
  double qber_x_upper;
  double qber_z_upper;
  double h_qber_x;
  double ec_leak;
} QmsKeyRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// New configuration holding the default parameters. Free with
// [`qms_config_free`].
struct QmsConfig *qms_config_new(void);

// Parses a TOML configuration into a new handle stored in `*out`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a writable pointer.
enum QmsStatus qms_config_from_toml(const char *text, struct QmsConfig **out);

// Sets one parameter addressed as `section.field`. The configuration is
// left unchanged when the new value is invalid.
//
// # Safety
// `config` must come from this library; `key` and `value` must be
// NUL-terminated strings.
enum QmsStatus qms_config_set(struct QmsConfig *config, const char *key, const char *value);

// # Safety
// `config` must come from this library and not be used afterwards; null is
// ignored.
void qms_config_free(struct QmsConfig *config);

// Probability that `m` sources each deliver one photon within `n` slots.
//
// # Safety
// `config` must come from this library; `out` must be writable.
enum QmsStatus qms_sync_prob(const struct QmsConfig *config, uint32_t m, uint32_t n, double *out);

// Probability of delivering `k_a` and `k_b` photons in a synchronized frame.
//
// # Safety
// `config` must come from this library; `out` must be writable.
enum QmsStatus qms_joint_pair_dist(const struct QmsConfig *config,
                                   uint32_t k_a,
                                   uint32_t k_b,
                                   uint32_t n,
                                   double *out);

// Coincidence-rate enhancement over unsynchronized operation.
//
// # Safety
// `config` must come from this library; `out` must be writable.
enum QmsStatus qms_enhancement(const struct QmsConfig *config,
                               uint32_t n,
                               enum QmsNormalization normalization,
                               double *out);

// Runs `n_frames` frames; results depend only on the configuration, frame
// count and seed, never on `workers` (0 = all cores).
//
// # Safety
// `config` must come from this library; `out` must be writable. Free the
// result with [`qms_sim_stats_free`].
enum QmsStatus qms_simulate(const struct QmsConfig *config,
                            uint64_t n_frames,
                            uint64_t seed,
                            uint32_t workers,
                            struct QmsSimStats **out);

// # Safety
// `stats` must come from [`qms_simulate`]; `out` must be writable.
enum QmsStatus qms_sim_stats_get(const struct QmsSimStats *stats, struct QmsSimSummary *out);

// # Safety
// `stats` must come from [`qms_simulate`] and not be used afterwards; null
// is ignored.
void qms_sim_stats_free(struct QmsSimStats *stats);

// Base-2 binary entropy.
//
// # Safety
// `out` must be writable.
enum QmsStatus qms_binary_entropy(double x, double *out);

// Secure key rate. `n_sigma < 0` uses the offsets in `stats`; otherwise
// the offsets are `n_sigma` Poisson standard errors.
//
// # Safety
// `stats` must be readable and `out` writable.
enum QmsStatus qms_secure_key_rate(const struct QmsQkdStats *stats,
                                   double f_e,
                                   double n_sigma,
                                   struct QmsKeyRate *out);

// Purity of the heralded photon from a row-major `rows x cols` intensity
// grid (rows along the heralded photon's axis).
//
// # Safety
// `intensity` must point to `rows * cols` readable values; `out` must be
// writable.
enum QmsStatus qms_purity(const double *intensity, size_t rows, size_t cols, double *out);

// Trace overlap of the heralded states of two grids sampled identically.
//
// # Safety
// Both grids must point to `rows * cols` readable values; `out` must be
// writable.
enum QmsStatus qms_indistinguishability(const double *a,
                                        const double *b,
                                        size_t rows,
                                        size_t cols,
                                        double *out);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`) and returns the full message length
// in bytes, excluding the terminator.
//
// # Safety
// `buf` must point to `len` writable bytes, or be null with `len == 0`.
size_t qms_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *qms_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QMSYNC_H */
