#ifndef BANDITLAB_H
#define BANDITLAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_NULL_POINTER = 1,
  BL_STATUS_INVALID_ARGUMENT = 2,
  BL_STATUS_DIMENSION_MISMATCH = 3,
  BL_STATUS_PRECONDITION = 4,
  BL_STATUS_NO_CORNER_SET = 5,
  BL_STATUS_INCOMPATIBLE = 6,
  BL_STATUS_CHANNEL_MISMATCH = 7,
  BL_STATUS_CORRUPTED_CHANNEL = 8,
  BL_STATUS_SEQUENCE_EXHAUSTED = 9,
  BL_STATUS_DEGENERATE = 10,
  BL_STATUS_CONFIG = 11,
  BL_STATUS_IO = 12,
  BL_STATUS_PANIC = 13,
} BlStatus;

typedef enum BlDomainKind {
  BL_DOMAIN_KIND_UNIT_BALL = 0,
  BL_DOMAIN_KIND_SHIFTED_BALL = 1,
  BL_DOMAIN_KIND_CYLINDER = 2,
  BL_DOMAIN_KIND_SIMPLEX = 3,
  BL_DOMAIN_KIND_L1_BALL = 4,
  BL_DOMAIN_KIND_HYPERCUBE = 5,
} BlDomainKind;

typedef enum BlConstruction {
  BL_CONSTRUCTION_SHIFTED_BALL = 0,
  BL_CONSTRUCTION_CYLINDER = 1,
  BL_CONSTRUCTION_SIMPLEX = 2,
  BL_CONSTRUCTION_HYPERCUBE = 3,
} BlConstruction;

typedef enum BlProtocol {
  BL_PROTOCOL_REGRET = 0,
  BL_PROTOCOL_ERROR = 1,
} BlProtocol;

/**
 * Decision domain handle.
 */
typedef struct BlDomain BlDomain;

/**
 * Loss model handle.
 */
typedef struct BlModel BlModel;

/**
 * Player handle.
 */
typedef struct BlPlayer BlPlayer;

/**
 * Seeded random stream handle.
 */
typedef struct BlRng BlRng;

typedef struct BlValidity {
  double mean_dual_norm;
  bool mean_check_passed;
  size_t tail_violations;
  bool passed;
} BlValidity;

typedef struct BlRunSummary {
  double regret;
  /**
   * NaN for regret runs.
   */
  double error;
  double average_error;
  double optimum;
  double scored_loss;
} BlRunSummary;

typedef struct BlScalingFit {
  double alpha;
  double beta;
  double log_c;
  double r2;
} BlScalingFit;

typedef struct BlLowerBound {
  double value;
  /**
   * True for regret bounds, false for error bounds.
   */
  bool is_regret;
  double regret_equivalent;
} BlLowerBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *bl_last_error(void);

/**
 * Library version as a static string.
 */
const char *bl_version(void);

/**
 * Creates a domain with default parameters.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BlStatus bl_domain_new(enum BlDomainKind kind, size_t dim, struct BlDomain **out);

/**
 * Creates `{w : ||w||_2 <= 1, w_0 <= cap}`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BlStatus bl_domain_capped_ball(size_t dim, double cap, struct BlDomain **out);

/**
 * Creates a domain from a JSON spec such as
 * `{"kind": "shifted_ball", "dim": 3, "params": {"shift": [0.5, 0, 0]}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum BlStatus bl_domain_from_json(const char *json, struct BlDomain **out);

/**
 * # Safety
 * `d` must be null or a handle from a `bl_domain_*` constructor, freed once.
 */
void bl_domain_free(struct BlDomain *d);

/**
 * # Safety
 * `d` must be a live domain handle and `out` writable.
 */
enum BlStatus bl_domain_dim(const struct BlDomain *d, size_t *out);

/**
 * # Safety
 * `w` must point to `n` doubles; other pointers must be valid.
 */
enum BlStatus bl_domain_contains(const struct BlDomain *d,
                                 const double *w,
                                 size_t n,
                                 double tol,
                                 bool *out);

/**
 * Writes `argmin_{w in W} <x, w>` to `w_out` (length `n`).
 *
 * # Safety
 * `x` and `w_out` must each hold `n` doubles.
 */
enum BlStatus bl_domain_linear_argmin(const struct BlDomain *d,
                                      const double *x,
                                      size_t n,
                                      double *w_out);

/**
 * # Safety
 * `x` must hold `n` doubles; `out` must be writable.
 */
enum BlStatus bl_domain_dual_norm(const struct BlDomain *d, const double *x, size_t n, double *out);

/**
 * Largest `mu` with every `{-mu, mu}^D` corner inside the domain.
 * Returns `BL_STATUS_NO_CORNER_SET` when there is none.
 *
 * # Safety
 * `d` must be a live handle and `out` writable.
 */
enum BlStatus bl_domain_corner_set_scale(const struct BlDomain *d, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_rng_new(uint64_t seed, struct BlRng **out);

/**
 * # Safety
 * `r` must be null or a handle from [`bl_rng_new`], freed once.
 */
void bl_rng_free(struct BlRng *r);

/**
 * Gaussian loss model with per-coordinate means and variances.
 *
 * # Safety
 * `mean` and `variance` must each hold `n` doubles.
 */
enum BlStatus bl_model_gaussian(const double *mean,
                                const double *variance,
                                size_t n,
                                struct BlModel **out);

/**
 * Loss model from an adversary JSON spec, resolved at `horizon` on
 * `domain`. Hidden parameters are drawn from `seed`.
 *
 * # Safety
 * `json` must be NUL-terminated; other pointers must be valid.
 */
enum BlStatus bl_model_from_json(const char *json,
                                 const struct BlDomain *domain,
                                 uint64_t horizon,
                                 uint64_t seed,
                                 struct BlModel **out);

/**
 * # Safety
 * `m` must be null or a model handle, freed once.
 */
void bl_model_free(struct BlModel *m);

/**
 * # Safety
 * `m` must be live and `out` writable.
 */
enum BlStatus bl_model_dim(const struct BlModel *m, size_t *out);

/**
 * Writes the model's exact mean to `out` (length `n`).
 *
 * # Safety
 * `out` must hold `n` doubles.
 */
enum BlStatus bl_model_mean(const struct BlModel *m, double *out, size_t n);

/**
 * Draws one loss vector into `out` (length `n`).
 *
 * # Safety
 * `m` and `rng` must be live handles not used concurrently; `out` must
 * hold `n` doubles.
 */
enum BlStatus bl_model_sample(struct BlModel *m, struct BlRng *rng, double *out, size_t n);

/**
 * Validity check: exact mean dual norm and a Monte Carlo tail check over
 * `z` (length `nz`) with `samples` draws.
 *
 * # Safety
 * Handles must be live; `z` must hold `nz` doubles; `out` writable.
 */
enum BlStatus bl_check_validity(struct BlModel *m,
                                const struct BlDomain *d,
                                size_t samples,
                                const double *z,
                                size_t nz,
                                struct BlRng *rng,
                                struct BlValidity *out);

/**
 * Largest admissible `mu` for a construction at effective dimension `d`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_select_mu(enum BlConstruction kind, size_t d, uint64_t horizon, double *out);

/**
 * Player from a JSON spec such as `{"kind": "hedge", "eta": "auto"}`.
 *
 * # Safety
 * `json` must be NUL-terminated; other pointers must be valid.
 */
enum BlStatus bl_player_from_json(const char *json,
                                  const struct BlDomain *domain,
                                  uint64_t horizon,
                                  struct BlPlayer **out);

/**
 * # Safety
 * `p` must be null or a player handle, freed once.
 */
void bl_player_free(struct BlPlayer *p);

/**
 * Runs one game. The model and player handles are copied, so they can be
 * reused for further runs.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum BlStatus bl_run(enum BlProtocol protocol,
                     const struct BlDomain *domain,
                     const struct BlModel *model,
                     const struct BlPlayer *player,
                     uint64_t horizon,
                     uint64_t seed,
                     struct BlRunSummary *out);

/**
 * Runs an experiment config (or manifest) and writes its result files
 * into `out_dir`. `workers = 0` uses machine parallelism.
 *
 * # Safety
 * Both strings must be NUL-terminated.
 */
enum BlStatus bl_run_experiment(const char *config_path, const char *out_dir, size_t workers);

/**
 * Fits `log mean = log C + alpha log d + beta log T` over `n` cells.
 *
 * # Safety
 * `dims`, `horizons` and `means` must each hold `n` values.
 */
enum BlStatus bl_fit_scaling(const size_t *dims,
                             const uint64_t *horizons,
                             const double *means,
                             size_t n,
                             struct BlScalingFit *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_kl_gaussian(double m1, double v1, double m2, double v2, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_lemma_dw_check(double w, uint32_t d, bool *out);

/**
 * Lower bound a construction proves at ambient dimension `dim`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BlStatus bl_lower_bound(enum BlConstruction kind,
                             size_t dim,
                             uint64_t horizon,
                             struct BlLowerBound *out);

/**
 * Plays the digit encoding of `w_hat` (a simplex point of length `d`)
 * against the binary loss `x`, then recovers `x` from the scalar loss
 * alone into `x_out`.
 *
 * # Safety
 * `w_hat` must hold `d` doubles; `x` and `x_out` must hold `d` bytes.
 */
enum BlStatus bl_digit_recover(const double *w_hat,
                               size_t d,
                               uint32_t p,
                               const uint8_t *x,
                               uint8_t *x_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDITLAB_H */
