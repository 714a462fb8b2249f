#ifndef SHE_MFC_H
#define SHE_MFC_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SheKernelFamily {
  SHE_KERNEL_FAMILY_RIESZ = 0,
  SHE_KERNEL_FAMILY_BESSEL = 1,
  SHE_KERNEL_FAMILY_HEAT = 2,
  SHE_KERNEL_FAMILY_POISSON = 3,
} SheKernelFamily;

// Result codes. Zero is success.
typedef enum SheStatus {
  SHE_STATUS_OK = 0,
  SHE_STATUS_INVALID_SPEC = 1,
  SHE_STATUS_INVALID_CONFIG = 2,
  SHE_STATUS_DOMAIN = 3,
  SHE_STATUS_SINGULAR_POINT = 4,
  SHE_STATUS_CONDITION_VIOLATED = 5,
  SHE_STATUS_QUADRATURE_FAILURE = 6,
  SHE_STATUS_DIVERGENT = 7,
  SHE_STATUS_NO_CONVERGENCE = 8,
  SHE_STATUS_OUTSIDE_REGIME = 9,
  SHE_STATUS_WORKER_FAILURE = 10,
  SHE_STATUS_NUMERICAL = 11,
  SHE_STATUS_NULL_POINTER = 12,
  SHE_STATUS_PANIC = 13,
} SheStatus;

// Opaque covariance kernel.
typedef struct SheKernel SheKernel;

// Opaque noise model: kernel, Hurst index and bound constants.
typedef struct SheModel SheModel;

// Point estimate. `std_error` is zero and `n_samples` is zero for
// deterministic values.
typedef struct SheEstimate {
  double value;
  double std_error;
  uint64_t n_samples;
} SheEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null. The pointer
// stays valid until the next failing call on this thread.
const char *she_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void she_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *she_version(void);

// Create a kernel handle.
//
// # Safety
// `out` must be valid for writes.
enum SheStatus she_kernel_new(enum SheKernelFamily family,
                              double alpha,
                              size_t d,
                              struct SheKernel **out);

// Release a kernel handle. Null is ignored.
//
// # Safety
// `k` must come from [`she_kernel_new`] and not have been freed.
void she_kernel_free(struct SheKernel *k);

// `f(x)` for `x` of length `d`.
//
// # Safety
// `x` must point to `len` readable doubles and `out` must be writable.
enum SheStatus she_kernel_eval(const struct SheKernel *k, const double *x, size_t len, double *out);

// Spectral density `g(xi)` for `xi` of length `d`.
//
// # Safety
// As for [`she_kernel_eval`].
enum SheStatus she_kernel_spectral(const struct SheKernel *k,
                                   const double *xi,
                                   size_t len,
                                   double *out);

// `(p_eps * f)(x)`.
//
// # Safety
// As for [`she_kernel_eval`].
enum SheStatus she_kernel_mollified(const struct SheKernel *k,
                                    double eps,
                                    const double *x,
                                    size_t len,
                                    double *out);

// Constant of the uniform bound on `J_f`. `rough` is set to 1 when the
// bound is `D (u + v)^{-(d - alpha)/2}` and to 0 when it is a constant `C`.
//
// # Safety
// `rough` and `out` must be writable.
enum SheStatus she_kernel_bound(const struct SheKernel *k, int32_t *rough, double *out);

// Create a noise model from a kernel (copied) and a Hurst index in
// `[1/2, 1)`. `beta_h` overrides the numerical constant when positive;
// pass 0 for the default. `c_star` must be positive.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum SheStatus she_model_new(const struct SheKernel *k,
                             double hurst,
                             double beta_h,
                             double c_star,
                             struct SheModel **out);

// Release a model handle. Null is ignored.
//
// # Safety
// `m` must come from [`she_model_new`] and not have been freed.
void she_model_free(struct SheModel *m);

// Chaos coefficient `alpha_{n,eps}(t)` (`eps = 0` for `alpha_n`). With
// `samples == 0` quadrature with `nodes` points is used (n <= 2);
// otherwise time-pair Monte Carlo. `workers == 0` selects the default.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_alpha_n(const struct SheModel *m,
                           size_t n,
                           double t,
                           double eps,
                           size_t nodes,
                           uint64_t samples,
                           uint64_t seed,
                           size_t worker_count,
                           struct SheEstimate *out);

// Upper bound on `alpha_n(t)`; may be infinite.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_alpha_n_bound(const struct SheModel *m, size_t n, double t, double *out);

// Truncated chaos series for `E|u(t,x)|^2` with `u0 = 1`. The order used
// is written to `order` when it is non-null.
//
// # Safety
// `m` must be a live model handle, `out` writable, `order` null or writable.
enum SheStatus she_second_moment(const struct SheModel *m,
                                 double t,
                                 double tail_tol,
                                 uint64_t seed,
                                 size_t worker_count,
                                 size_t *order,
                                 struct SheEstimate *out);

// Feynman-Kac estimate of `E[u(t,0)^k]` with `u0 = 1`.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_fk_moment(const struct SheModel *m,
                             size_t k,
                             double t,
                             double eps,
                             size_t n_steps,
                             uint64_t n_samples,
                             uint64_t seed,
                             size_t worker_count,
                             struct SheEstimate *out);

// Existence report as a JSON string written to `out`; release it with
// [`she_string_free`].
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_regime_json(const struct SheModel *m, size_t max_k, char **out);

// Critical time `T_0` of the second moment; infinite when none.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_critical_big_t0(const struct SheModel *m, double *out);

// Critical time `t_0(k)` of the k-th moment.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_critical_t0(const struct SheModel *m, size_t k, double *out);

// Critical exponential-moment parameter `lambda_0(t)` for weight norm `gamma`.
//
// # Safety
// `m` must be a live model handle and `out` writable.
enum SheStatus she_critical_lambda0(const struct SheModel *m, double t, double gamma, double *out);

// Integral of `[(t - s_n) ... (s_2 - s_1)]^h` over the ordered simplex.
//
// # Safety
// `out` must be writable.
enum SheStatus she_simplex_integral(size_t n, double t, double h, double *out);

// `Phi(x, a) = sum_n x^n / (n!)^a`.
//
// # Safety
// `out` must be writable.
enum SheStatus she_phi(double x, double a, double tol, double *out);

// Copy of the last error message, or null; release with [`she_string_free`].
char *she_last_error_copy(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHE_MFC_H */
