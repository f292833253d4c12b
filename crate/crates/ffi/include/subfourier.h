#ifndef SUBFOURIER_H
#define SUBFOURIER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_PARAMETER = 2,
  SF_STATUS_BUFFER_TOO_SMALL = 3,
  SF_STATUS_TRUNCATION = 4,
  SF_STATUS_NUMERICAL = 5,
  SF_STATUS_PANIC = 6,
} SfStatus;

/**
 * Rotor parameters plus a prepared propagator.
 */
typedef struct SfSystem SfSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error of this thread into `buf` (NUL-terminated, truncated
 * to fit) and returns the full message length without the NUL. Returns 0 when
 * there is no error; `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sf_last_error_message(char *buf, size_t len);

void sf_clear_error(void);

/**
 * `kbar = 8 omega_recoil T` for cesium at a kick period in microseconds.
 */
double sf_hbar_eff(double period_us);

/**
 * Creates a system on the `2 half_width + 1` site lattice.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SfStatus sf_system_new(double kick_strength,
                            double hbar_eff,
                            double quasimomentum,
                            size_t half_width,
                            struct SfSystem **out);

/**
 * # Safety
 * `system` must be null or come from [`sf_system_new`] and not be freed twice.
 */
void sf_system_free(struct SfSystem *system);

/**
 * Lattice dimension `2 half_width + 1`, or 0 for a null handle.
 *
 * # Safety
 * `system` must be null or a live handle.
 */
size_t sf_system_dim(const struct SfSystem *system);

/**
 * Evolves `|p = 0>` for `periods` periods of the two-frequency drive and
 * writes `<p^2>` (scaled, `p = kbar (m + beta)`) and the zero-momentum
 * population after each period. Either output may be null; non-null outputs
 * need room for `periods` values.
 *
 * # Safety
 * `system` must be a live handle; non-null outputs must be valid for `len` doubles.
 */
enum SfStatus sf_evolve(const struct SfSystem *system,
                        double ratio,
                        double lambda0,
                        size_t periods,
                        size_t p0_window,
                        double *p2_out,
                        double *p0_out,
                        size_t len);

/**
 * Eigenphases of the one-period operator `U(lambda)` in ascending order,
 * with the weight of `|p = 0>` on each eigenstate. Both buffers need
 * [`sf_system_dim`] entries; `weights` may be null.
 *
 * # Safety
 * `system` must be a live handle; `phases` (and `weights` if non-null) valid for `len` doubles.
 */
enum SfStatus sf_floquet_eigenphases(const struct SfSystem *system,
                                     double lambda,
                                     double *phases,
                                     double *weights,
                                     size_t len);

/**
 * Classical momentum diffusion per kick of a uniform `p = 0` ensemble, in
 * the kick-strength units of the standard map (`D ~ K^2 / 2` well above chaos).
 *
 * # Safety
 * `d_per_kick` must be valid for a write; `d_err` may be null.
 */
enum SfStatus sf_classical_diffusion(double kick_strength,
                                     double ratio,
                                     double lambda0,
                                     size_t periods,
                                     size_t ensemble_size,
                                     uint64_t seed,
                                     double *d_per_kick,
                                     double *d_err);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBFOURIER_H */
