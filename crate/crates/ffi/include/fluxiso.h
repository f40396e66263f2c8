#ifndef FLUXISO_H
#define FLUXISO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum FluxisoStatus {
  FLUXISO_STATUS_OK = 0,
  FLUXISO_STATUS_NULL_POINTER = 1,
  FLUXISO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unknown catalog entry, bad domain, unreadable or invalid config.
   */
  FLUXISO_STATUS_CONFIG_ERROR = 3,
  /**
   * A construction step failed; see the message.
   */
  FLUXISO_STATUS_COMPUTATION_FAILED = 4,
  /**
   * The call completed but a verification check failed.
   */
  FLUXISO_STATUS_VERIFICATION_FAILED = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  FLUXISO_STATUS_PANIC = 6,
} FluxisoStatus;

/**
 * A t-indexed family of immersions.
 */
typedef struct FluxisoFamily FluxisoFamily;

/**
 * A conformal minimal immersion of a circular domain.
 */
typedef struct FluxisoImmersion FluxisoImmersion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fluxiso_last_error(void);

/**
 * Named example immersion ("catenoid", "enneper_annulus", ...).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FluxisoStatus fluxiso_catalog(const char *name, struct FluxisoImmersion **out);

/**
 * # Safety
 * `u` must come from this library and not be used afterwards.
 */
void fluxiso_immersion_free(struct FluxisoImmersion *u);

/**
 * Number of homology generators (holes) of the domain.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FluxisoStatus fluxiso_immersion_generators(const struct FluxisoImmersion *u, size_t *out);

/**
 * Flux of the immersion on generator `j`, written to `out[0..3]`.
 *
 * # Safety
 * `out` must point to three doubles.
 */
enum FluxisoStatus fluxiso_immersion_flux(const struct FluxisoImmersion *u, size_t j, double *out);

/**
 * u(x + iy), integrated from the base point along the circle through it
 * and then radially; written to `out[0..3]`.
 *
 * # Safety
 * `out` must point to three doubles.
 */
enum FluxisoStatus fluxiso_immersion_evaluate(const struct FluxisoImmersion *u,
                                              double x,
                                              double y,
                                              double *out);

/**
 * Isotopy to an immersion with vanishing flux on `n_t` t-samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FluxisoStatus fluxiso_flux_to_zero(const struct FluxisoImmersion *u,
                                        size_t n_t,
                                        double tol_flux,
                                        double tol_period,
                                        struct FluxisoFamily **out);

/**
 * Isotopy to prescribed fluxes; `targets` holds 3 doubles per generator.
 *
 * # Safety
 * `targets` must point to `3 * n_targets` doubles.
 */
enum FluxisoStatus fluxiso_prescribe_flux(const struct FluxisoImmersion *u,
                                          const double *targets,
                                          size_t n_targets,
                                          size_t n_t,
                                          double tol_flux,
                                          double tol_period,
                                          struct FluxisoFamily **out);

/**
 * # Safety
 * `f` must come from this library and not be used afterwards.
 */
void fluxiso_family_free(struct FluxisoFamily *f);

/**
 * Number of t-samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FluxisoStatus fluxiso_family_len(const struct FluxisoFamily *f, size_t *out);

/**
 * Time and flux on generator `j` of member `k`; flux goes to `flux[0..3]`.
 *
 * # Safety
 * `flux` must point to three doubles.
 */
enum FluxisoStatus fluxiso_family_flux(const struct FluxisoFamily *f,
                                       size_t k,
                                       size_t j,
                                       double *t,
                                       double *flux);

/**
 * Member `k` as a standalone immersion.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FluxisoStatus fluxiso_family_member(const struct FluxisoFamily *f,
                                         size_t k,
                                         struct FluxisoImmersion **out);

/**
 * Recomputes every residual at doubled resolution. Returns
 * `VerificationFailed` when a check fails; `report`, when not null,
 * receives the text report (free it with `fluxiso_string_free`).
 *
 * # Safety
 * Pointers must be valid or null where allowed.
 */
enum FluxisoStatus fluxiso_family_verify(const struct FluxisoFamily *f,
                                         double tol_flux,
                                         double tol_period,
                                         char **report);

/**
 * Z_2 class (0 or 1) of every generator; writes at most `cap` entries to
 * `classes` and the generator count to `count`.
 *
 * # Safety
 * `classes` must point to `cap` bytes.
 */
enum FluxisoStatus fluxiso_classify(const struct FluxisoImmersion *u,
                                    uint64_t seed,
                                    uint8_t *classes,
                                    size_t cap,
                                    size_t *count);

/**
 * Runs a configuration file as the `run` verb does and stores the
 * command-line exit code (0, 1 or 2) in `exit_code`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum FluxisoStatus fluxiso_run_config(const char *path, int32_t *exit_code);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void fluxiso_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUXISO_H */
