#ifndef QREP_H
#define QREP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QrepStatus {
  QREP_STATUS_OK = 0,
  QREP_STATUS_INVALID_ARGUMENT = 1,
  QREP_STATUS_CAPACITY = 2,
  QREP_STATUS_PARSE = 3,
  QREP_STATUS_INTERNAL = 4,
  QREP_STATUS_NULL_POINTER = 5,
  QREP_STATUS_PANIC = 6,
} QrepStatus;

/**
 * Meta-game over enumerated pure strategies of a spec.
 */
typedef struct QrepMetaGame QrepMetaGame;

/**
 * Repeated game: stage game, monitoring, continuation probability and recalls.
 */
typedef struct QrepSpec QrepSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 if there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qrep_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated library version.
 */
const char *qrep_version(void);

/**
 * Built-in scenario (`pd_standard`, `matching_pennies`, `pd_variant_noisy(e1,e2,e3)`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum QrepStatus qrep_spec_from_scenario(const char *name,
                                        double delta,
                                        size_t recall,
                                        struct QrepSpec **out);

/**
 * Spec from game-file text (TOML).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum QrepStatus qrep_spec_from_toml(const char *text, struct QrepSpec **out);

/**
 * # Safety
 * `spec` must be null or a handle from `qrep_spec_*` not yet freed.
 */
void qrep_spec_free(struct QrepSpec *spec);

/**
 * Enumerates pure strategies and fills the meta-game. `exploration` is the
 * ε of the ε-executed game (0 for the plain game).
 *
 * # Safety
 * `spec` must be a live spec handle; `out` must be a valid pointer.
 */
enum QrepStatus qrep_meta_game_build(const struct QrepSpec *spec,
                                     double exploration,
                                     struct QrepMetaGame **out);

/**
 * # Safety
 * `meta` must be null or a handle from `qrep_meta_game_build` not yet freed.
 */
void qrep_meta_game_free(struct QrepMetaGame *meta);

/**
 * # Safety
 * `meta` must be a live handle; `out` must be a valid pointer.
 */
enum QrepStatus qrep_meta_game_player_count(const struct QrepMetaGame *meta, size_t *out);

/**
 * Number of pure strategies of `player`.
 *
 * # Safety
 * `meta` must be a live handle; `out` must be a valid pointer.
 */
enum QrepStatus qrep_meta_game_strategy_count(const struct QrepMetaGame *meta,
                                              size_t player,
                                              size_t *out);

/**
 * Expected discounted value of a mixed profile for every player.
 *
 * # Safety
 * `weights` must hold `weights_len` doubles and `values` `values_len` writable doubles.
 */
enum QrepStatus qrep_meta_game_value(const struct QrepMetaGame *meta,
                                     const double *weights,
                                     size_t weights_len,
                                     double *values,
                                     size_t values_len);

/**
 * q-gradient of a mixed profile, flattened like the weights.
 *
 * # Safety
 * `weights` must hold `weights_len` doubles and `gradient` `gradient_len` writable doubles.
 */
enum QrepStatus qrep_meta_game_q_gradient(const struct QrepMetaGame *meta,
                                          const double *weights,
                                          size_t weights_len,
                                          double q,
                                          double *gradient,
                                          size_t gradient_len);

/**
 * Brute-force certification: `verdict` is 0 strict, 1 equilibrium but not
 * strict, 2 not an equilibrium (the CLI's check-eq exit codes).
 *
 * # Safety
 * `weights` must hold `weights_len` doubles; `verdict` must be a valid pointer.
 */
enum QrepStatus qrep_meta_game_check_strict(const struct QrepMetaGame *meta,
                                            const double *weights,
                                            size_t weights_len,
                                            int *verdict);

/**
 * Euclidean projection of `point` onto the probability simplex; `out` may alias `point`.
 *
 * # Safety
 * `point` and `out` must each hold `len` doubles.
 */
enum QrepStatus qrep_project_simplex(const double *point, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QREP_H */
