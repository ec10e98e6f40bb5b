#ifndef TUBECALC_H
#define TUBECALC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result of every fallible call.
 */
typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_INVALID_ARGUMENT = 2,
  TC_STATUS_SCHEMA = 3,
  TC_STATUS_NOT_CONVERGED = 4,
  TC_STATUS_NUMERICAL = 5,
  TC_STATUS_IO = 6,
  TC_STATUS_PANIC = 7,
} TcStatus;

/*
 Thick distribution T.
 */
typedef struct TcDistribution TcDistribution;

/*
 Pairing engine bound to one shape and quadrature resolution.
 */
typedef struct TcEngine TcEngine;

/*
 Test function φ.
 */
typedef struct TcTestFn TcTestFn;

/*
 Outcome of [`tc_pair`]; `eta` and `value_eta_half` are NaN for pairings
 without a finite part.
 */
typedef struct TcPairing {
  double value;
  double imag;
  double eta;
  double value_eta_half;
  double abs_diff;
  bool eta_consistent;
} TcPairing;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. Valid until the next
 failing call on the same thread.
 */
const char *tc_last_error(void);

/*
 Library version as a static string.
 */
const char *tc_version(void);

/*
 Engine for the sphere of radius `r` in R^n at default quadrature levels.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_engine_sphere(uint32_t n, double r, struct TcEngine **out);

/*
 Engine for the circle of radius `radius` in the x1x2-plane of R^3.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_engine_circle3d(double radius, struct TcEngine **out);

/*
 Replaces the quadrature resolution of an engine.

 # Safety
 `engine` must come from a `tc_engine_*` constructor and not be freed.
 */
enum TcStatus tc_engine_set_levels(struct TcEngine *engine,
                                   uint32_t sigma_level,
                                   uint32_t fiber_level,
                                   uint32_t radial_points);

/*
 Tube radius of the engine's shape, NaN for a null handle.

 # Safety
 `engine` must be null or a live engine handle.
 */
double tc_engine_tube_radius(const struct TcEngine *engine);

/*
 # Safety
 `engine` must be null or a live engine handle; it is invalid afterwards.
 */
void tc_engine_free(struct TcEngine *engine);

/*
 Bump χ(ρ) with a_0 ≡ 1 and support radius `support`.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_testfn_bump(double support, struct TcTestFn **out);

/*
 χ(ρ) Σ_j coeffs[j] ρ^{order+j}.

 # Safety
 `coeffs` must point to `len` doubles; `out` must be writable.
 */
enum TcStatus tc_testfn_laurent(int32_t order,
                                const double *coeffs,
                                size_t len,
                                double support,
                                struct TcTestFn **out);

/*
 χ(ρ) n_axis(ξ), the normal component on a hypersurface.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_testfn_normal_component(uint32_t axis, double support, struct TcTestFn **out);

/*
 ∂φ/∂x_axis.

 # Safety
 `phi` must be a live test-function handle; `out` must be writable.
 */
enum TcStatus tc_testfn_derivative(const struct TcTestFn *phi,
                                   uint32_t axis,
                                   struct TcTestFn **out);

/*
 # Safety
 `phi` must be null or a live handle; it is invalid afterwards.
 */
void tc_testfn_free(struct TcTestFn *phi);

/*
 Pf(ρ^λ) with λ = lambda_re + i·lambda_im.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_dist_pf(double lambda_re, double lambda_im, struct TcDistribution **out);

/*
 δ^{[degree]} with g ≡ 1.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum TcStatus tc_dist_delta(int32_t degree, struct TcDistribution **out);

/*
 ∂T/∂x_axis on the engine's shape.

 # Safety
 `engine` and `t` must be live handles; `out` must be writable.
 */
enum TcStatus tc_dist_derivative(const struct TcEngine *engine,
                                 const struct TcDistribution *t,
                                 uint32_t axis,
                                 struct TcDistribution **out);

/*
 ψ·T.

 # Safety
 `psi` and `t` must be live handles; `out` must be writable.
 */
enum TcStatus tc_dist_weighted(const struct TcTestFn *psi,
                               const struct TcDistribution *t,
                               struct TcDistribution **out);

/*
 Σ coeffs[k]·parts[k].

 # Safety
 `coeffs` and `parts` must point to `len` entries of live handles.
 */
enum TcStatus tc_dist_combination(const double *coeffs,
                                  const struct TcDistribution *const *parts,
                                  size_t len,
                                  struct TcDistribution **out);

/*
 Writes the distribution label into `buf` (nul-terminated, truncated to
 `cap`) and returns the full label length in bytes.

 # Safety
 `t` must be a live handle; `buf` must be null or hold `cap` bytes.
 */
size_t tc_dist_label(const struct TcDistribution *t, char *buf, size_t cap);

/*
 # Safety
 `t` must be null or a live handle; it is invalid afterwards.
 */
void tc_dist_free(struct TcDistribution *t);

/*
 ⟨T, φ⟩. A non-positive `eta` selects the default split point.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum TcStatus tc_pair(const struct TcEngine *engine,
                      const struct TcDistribution *t,
                      const struct TcTestFn *phi,
                      double eta,
                      struct TcPairing *out);

/*
 Residue of Pf(ρ^λ) at λ = k: the delta formula and the λ-limit.

 # Safety
 Handles must be live; `formula` and `limit` must be writable.
 */
enum TcStatus tc_residue(const struct TcEngine *engine,
                         int32_t k,
                         const struct TcTestFn *phi,
                         double *formula,
                         double *limit);

/*
 Closed-form ⟨∂δ^{[j]}/∂x_i, χ n_k⟩ on the sphere (1-based i, k).
 */
double tc_sphere_delta_derivative_oracle(uint32_t n, double r, uint32_t i, uint32_t k, int32_t j);

/*
 Runs a JSON scenario and returns the rendered report (`json != 0` selects
 JSON, else CSV) in `out`, to be released with [`tc_string_free`].

 # Safety
 `scenario` must be a nul-terminated UTF-8 string; `out` must be writable.
 */
enum TcStatus tc_run_scenario(const char *scenario, bool json, char **out);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void tc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUBECALC_H */
