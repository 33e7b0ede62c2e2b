#ifndef GRF_EXCURSION_H
#define GRF_EXCURSION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum ExStatus {
  EX_STATUS_OK = 0,
  EX_STATUS_NULL_POINTER = 1,
  EX_STATUS_INVALID_ARGUMENT = 2,
  EX_STATUS_CONFIG = 3,
  EX_STATUS_NUMERICAL = 4,
  EX_STATUS_IO = 5,
  EX_STATUS_BUFFER_TOO_SMALL = 6,
  EX_STATUS_PANIC = 7,
} ExStatus;

// Run configuration handle.
typedef struct ExConfig ExConfig;

// Posterior handle: the field model, grid and planning context of the
// configuration it was created from, plus the current posterior.
typedef struct ExPosterior ExPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ex_version(void);

// Message of the last failure on this thread, or null if none. The
// pointer stays valid until the next failing call on this thread.
const char *ex_last_error_message(void);

// Creates a configuration with all defaults.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ExStatus ex_config_new_default(struct ExConfig **out);

// Parses a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated UTF-8 string; `out` as in
// [`ex_config_new_default`].
enum ExStatus ex_config_from_toml(const char *toml, struct ExConfig **out);

// Selects the planning strategy: 0 static north, 1 static east, 2 static
// zigzag, 3 naive, 4 myopic, 5 look-ahead.
//
// # Safety
// `cfg` must be a live handle.
enum ExStatus ex_config_set_strategy(struct ExConfig *cfg, uint32_t strategy);

// # Safety
// `cfg` must be null or a handle from this library not yet freed.
void ex_config_free(struct ExConfig *cfg);

// Creates the prior posterior of a configuration.
//
// # Safety
// `cfg` must be a live handle; `out` as in [`ex_config_new_default`].
enum ExStatus ex_posterior_new(const struct ExConfig *cfg, struct ExPosterior **out);

// # Safety
// `post` must be null or a handle from this library not yet freed.
void ex_posterior_free(struct ExPosterior *post);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `post` must be null or a live handle.
size_t ex_posterior_node_count(const struct ExPosterior *post);

// Number of responses, or 0 for a null handle.
//
// # Safety
// `post` must be null or a live handle.
size_t ex_posterior_response_count(const struct ExPosterior *post);

// Conditions on `n` observations `values[i]` of response `responses[i]`
// at `(xs[i], ys[i])` with independent noise of standard deviation
// `noise_sd[i]`. Points need not be grid nodes; the response index is
// 0-based.
//
// # Safety
// Each array must hold at least `n` readable elements; `post` must be a
// live handle.
enum ExStatus ex_posterior_update(struct ExPosterior *post,
                                  size_t n,
                                  const double *xs,
                                  const double *ys,
                                  const size_t *responses,
                                  const double *values,
                                  const double *noise_sd);

// Writes the posterior mean, node-major with responses interleaved
// (`node * p + response`), into `out[0..len)`.
//
// # Safety
// `out` must hold `len` writable doubles; `post` must be a live handle.
enum ExStatus ex_posterior_mean(const struct ExPosterior *post, double *out, size_t len);

// Writes the posterior marginal variances in the layout of
// [`ex_posterior_mean`].
//
// # Safety
// As [`ex_posterior_mean`].
enum ExStatus ex_posterior_variance(const struct ExPosterior *post, double *out, size_t len);

// Writes the excursion probability of every grid node into `out`.
//
// # Safety
// `out` must hold `len` writable doubles; `post` must be a live handle.
enum ExStatus ex_posterior_excursion_probabilities(const struct ExPosterior *post,
                                                   double *out,
                                                   size_t len);

// Integrated Bernoulli variance of the current posterior.
//
// # Safety
// `out` must be writable; `post` must be a live handle.
enum ExStatus ex_posterior_ibv(const struct ExPosterior *post, double *out);

// Chooses the next waypoint with the configured strategy.
//
// `current_node` is the vehicle's waypoint, `visited` the `n_visited`
// waypoints already travelled (used for revisit pruning) and `stage` the
// number of completed legs. The candidate table is written to
// `out_nodes`/`out_scores` (each of `capacity` elements, at most six are
// needed) and its length to `out_count`.
//
// # Safety
// Pointers must be valid for the stated lengths; `post` must be a live
// handle.
enum ExStatus ex_plan_step(const struct ExPosterior *post,
                           size_t current_node,
                           const size_t *visited,
                           size_t n_visited,
                           size_t stage,
                           size_t *out_chosen,
                           size_t *out_nodes,
                           double *out_scores,
                           size_t capacity,
                           size_t *out_count);

// Bivariate standard normal CDF `P(X ≤ h, Y ≤ k)` with correlation `rho`.
//
// # Safety
// `out` must be writable.
enum ExStatus ex_bvn_cdf(double h, double k, double rho, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRF_EXCURSION_H */
