//! C interface to `she-mfc`.
//!
//! Kernels and noise models are opaque heap handles created by `*_new`
//! and released by `*_free`. Every fallible call returns a [`SheStatus`];
//! on failure the message is available from [`she_last_error`] on the
//! same thread until the next failing call. Strings returned by the
//! library must be released with [`she_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use she_mfc::analytic::{phi_series, simplex_integral};
use she_mfc::chaos::{alpha_n_bound, alpha_n_eps, second_moment_series, AlphaMethod, NoiseModel, SeriesConfig};
use she_mfc::fk_moments::{fk_moment, FkConfig, InitialCondition};
use she_mfc::kernels::{BoundConstants, KernelFamily, KernelSpec};
use she_mfc::mc_engine::Estimate;
use she_mfc::regime::{critical_lambda0, critical_time_big_t0, critical_time_t0, existence_report};
use she_mfc::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SheStatus {
    Ok = 0,
    InvalidSpec = 1,
    InvalidConfig = 2,
    Domain = 3,
    SingularPoint = 4,
    ConditionViolated = 5,
    QuadratureFailure = 6,
    Divergent = 7,
    NoConvergence = 8,
    OutsideRegime = 9,
    WorkerFailure = 10,
    Numerical = 11,
    NullPointer = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SheKernelFamily {
    Riesz = 0,
    Bessel = 1,
    Heat = 2,
    Poisson = 3,
}

impl From<SheKernelFamily> for KernelFamily {
    fn from(f: SheKernelFamily) -> Self {
        match f {
            SheKernelFamily::Riesz => KernelFamily::Riesz,
            SheKernelFamily::Bessel => KernelFamily::Bessel,
            SheKernelFamily::Heat => KernelFamily::Heat,
            SheKernelFamily::Poisson => KernelFamily::Poisson,
        }
    }
}

/// Point estimate. `std_error` is zero and `n_samples` is zero for
/// deterministic values.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl From<Estimate> for SheEstimate {
    fn from(e: Estimate) -> Self {
        Self {
            value: e.value,
            std_error: e.std_error,
            n_samples: e.n_samples,
        }
    }
}

/// Opaque covariance kernel.
pub struct SheKernel(KernelSpec);

/// Opaque noise model: kernel, Hurst index and bound constants.
pub struct SheModel(NoiseModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SheStatus {
    match e {
        Error::InvalidSpec(_) => SheStatus::InvalidSpec,
        Error::InvalidConfig(_) => SheStatus::InvalidConfig,
        Error::Domain(_) => SheStatus::Domain,
        Error::SingularPoint(_) => SheStatus::SingularPoint,
        Error::ConditionViolated(_) => SheStatus::ConditionViolated,
        Error::QuadratureFailure { .. } => SheStatus::QuadratureFailure,
        Error::Divergent(_) => SheStatus::Divergent,
        Error::NoConvergence { .. } => SheStatus::NoConvergence,
        Error::OutsideRegime(_) => SheStatus::OutsideRegime,
        Error::WorkerFailure { .. } => SheStatus::WorkerFailure,
        Error::Numerical(_) => SheStatus::Numerical,
    }
}

struct NullArg(&'static str);

enum Failure {
    Lib(Error),
    Null(NullArg),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<NullArg> for Failure {
    fn from(n: NullArg) -> Self {
        Failure::Null(n)
    }
}

/// Runs `f`, writing its value through `out` on success. Errors and panics
/// become status codes with the message stored for [`she_last_error`].
fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, Failure>) -> SheStatus {
    if out.is_null() {
        set_error("output pointer is null".into());
        return SheStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            // SAFETY: checked non-null above; the caller provides writable storage.
            unsafe { out.write(v) };
            SheStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(NullArg(name)))) => {
            set_error(format!("`{name}` is null"));
            SheStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            SheStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, NullArg> {
    p.as_ref().ok_or(NullArg(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], NullArg> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(NullArg(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn workers(w: usize) -> Option<usize> {
    (w > 0).then_some(w)
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn she_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn she_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn she_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a kernel handle.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn she_kernel_new(family: SheKernelFamily, alpha: f64, d: usize, out: *mut *mut SheKernel) -> SheStatus {
    guard(out, || {
        let spec = KernelSpec::new(family.into(), alpha, d)?;
        Ok(Box::into_raw(Box::new(SheKernel(spec))))
    })
}

/// Release a kernel handle. Null is ignored.
///
/// # Safety
/// `k` must come from [`she_kernel_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn she_kernel_free(k: *mut SheKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// `f(x)` for `x` of length `d`.
///
/// # Safety
/// `x` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn she_kernel_eval(k: *const SheKernel, x: *const f64, len: usize, out: *mut f64) -> SheStatus {
    guard(out, || {
        let k = deref(k, "k")?;
        Ok(k.0.eval(slice(x, len, "x")?)?)
    })
}

/// Spectral density `g(xi)` for `xi` of length `d`.
///
/// # Safety
/// As for [`she_kernel_eval`].
#[no_mangle]
pub unsafe extern "C" fn she_kernel_spectral(k: *const SheKernel, xi: *const f64, len: usize, out: *mut f64) -> SheStatus {
    guard(out, || {
        let k = deref(k, "k")?;
        Ok(k.0.spectral_density(slice(xi, len, "xi")?)?)
    })
}

/// `(p_eps * f)(x)`.
///
/// # Safety
/// As for [`she_kernel_eval`].
#[no_mangle]
pub unsafe extern "C" fn she_kernel_mollified(
    k: *const SheKernel,
    eps: f64,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SheStatus {
    guard(out, || {
        let k = deref(k, "k")?;
        Ok(k.0.mollified(eps, slice(x, len, "x")?)?)
    })
}

/// Constant of the uniform bound on `J_f`. `rough` is set to 1 when the
/// bound is `D (u + v)^{-(d - alpha)/2}` and to 0 when it is a constant `C`.
///
/// # Safety
/// `rough` and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn she_kernel_bound(k: *const SheKernel, rough: *mut i32, out: *mut f64) -> SheStatus {
    if rough.is_null() {
        set_error("`rough` is null".into());
        return SheStatus::NullPointer;
    }
    guard(out, || {
        let k = deref(k, "k")?;
        let (flag, c) = match k.0.bound_constants()? {
            BoundConstants::Smooth { c } => (0, c),
            BoundConstants::Rough { d_const } => (1, d_const),
        };
        rough.write(flag);
        Ok(c)
    })
}

/// Create a noise model from a kernel (copied) and a Hurst index in
/// `[1/2, 1)`. `beta_h` overrides the numerical constant when positive;
/// pass 0 for the default. `c_star` must be positive.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_model_new(
    k: *const SheKernel,
    hurst: f64,
    beta_h: f64,
    c_star: f64,
    out: *mut *mut SheModel,
) -> SheStatus {
    guard(out, || {
        let k = deref(k, "k")?;
        let m = NoiseModel {
            kernel: k.0,
            hurst,
            beta_override: (beta_h != 0.0).then_some(beta_h),
            c_star,
        };
        m.validate()?;
        Ok(Box::into_raw(Box::new(SheModel(m))))
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `m` must come from [`she_model_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn she_model_free(m: *mut SheModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Chaos coefficient `alpha_{n,eps}(t)` (`eps = 0` for `alpha_n`). With
/// `samples == 0` quadrature with `nodes` points is used (n <= 2);
/// otherwise time-pair Monte Carlo. `workers == 0` selects the default.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_alpha_n(
    m: *const SheModel,
    n: usize,
    t: f64,
    eps: f64,
    nodes: usize,
    samples: u64,
    seed: u64,
    worker_count: usize,
    out: *mut SheEstimate,
) -> SheStatus {
    guard(out, || {
        let m = deref(m, "m")?;
        let method = if samples == 0 {
            AlphaMethod::Quadrature { nodes }
        } else {
            AlphaMethod::Mc {
                samples,
                seed,
                stream_id: 0,
                inner_samples: 4,
                workers: workers(worker_count),
            }
        };
        Ok(alpha_n_eps(&m.0, n, t, eps, method)?.into())
    })
}

/// Upper bound on `alpha_n(t)`; may be infinite.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_alpha_n_bound(m: *const SheModel, n: usize, t: f64, out: *mut f64) -> SheStatus {
    guard(out, || Ok(alpha_n_bound(&deref(m, "m")?.0, n, t)?))
}

/// Truncated chaos series for `E|u(t,x)|^2` with `u0 = 1`. The order used
/// is written to `order` when it is non-null.
///
/// # Safety
/// `m` must be a live model handle, `out` writable, `order` null or writable.
#[no_mangle]
pub unsafe extern "C" fn she_second_moment(
    m: *const SheModel,
    t: f64,
    tail_tol: f64,
    seed: u64,
    worker_count: usize,
    order: *mut usize,
    out: *mut SheEstimate,
) -> SheStatus {
    guard(out, || {
        let m = deref(m, "m")?;
        let cfg = SeriesConfig {
            tail_tol,
            seed,
            workers: workers(worker_count),
            ..SeriesConfig::default()
        };
        let r = second_moment_series(&m.0, t, &cfg)?;
        if !order.is_null() {
            order.write(r.order);
        }
        Ok(r.value.into())
    })
}

/// Feynman-Kac estimate of `E[u(t,0)^k]` with `u0 = 1`.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_fk_moment(
    m: *const SheModel,
    k: usize,
    t: f64,
    eps: f64,
    n_steps: usize,
    n_samples: u64,
    seed: u64,
    worker_count: usize,
    out: *mut SheEstimate,
) -> SheStatus {
    guard(out, || {
        let m = deref(m, "m")?;
        let cfg = FkConfig {
            workers: workers(worker_count),
            ..FkConfig::new(t, eps, n_steps, n_samples, seed)
        };
        Ok(fk_moment(&m.0, &InitialCondition::default(), k, &cfg)?.value.into())
    })
}

/// Existence report as a JSON string written to `out`; release it with
/// [`she_string_free`].
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_regime_json(m: *const SheModel, max_k: usize, out: *mut *mut c_char) -> SheStatus {
    guard(out, || {
        let r = existence_report(&deref(m, "m")?.0, max_k)?;
        let s = serde_json::to_string(&r).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(CString::new(s).map_err(|e| Error::Numerical(e.to_string()))?.into_raw())
    })
}

/// Critical time `T_0` of the second moment; infinite when none.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_critical_big_t0(m: *const SheModel, out: *mut f64) -> SheStatus {
    guard(out, || Ok(critical_time_big_t0(&deref(m, "m")?.0)?))
}

/// Critical time `t_0(k)` of the k-th moment.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_critical_t0(m: *const SheModel, k: usize, out: *mut f64) -> SheStatus {
    guard(out, || Ok(critical_time_t0(&deref(m, "m")?.0, k)?))
}

/// Critical exponential-moment parameter `lambda_0(t)` for weight norm `gamma`.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn she_critical_lambda0(m: *const SheModel, t: f64, gamma: f64, out: *mut f64) -> SheStatus {
    guard(out, || Ok(critical_lambda0(&deref(m, "m")?.0, t, gamma)?))
}

/// Integral of `[(t - s_n) ... (s_2 - s_1)]^h` over the ordered simplex.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn she_simplex_integral(n: usize, t: f64, h: f64, out: *mut f64) -> SheStatus {
    guard(out, || Ok(simplex_integral(n, t, h)?))
}

/// `Phi(x, a) = sum_n x^n / (n!)^a`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn she_phi(x: f64, a: f64, tol: f64, out: *mut f64) -> SheStatus {
    guard(out, || Ok(phi_series(x, a, tol)?))
}

/// Copy of the last error message, or null; release with [`she_string_free`].
#[no_mangle]
pub extern "C" fn she_last_error_copy() -> *mut c_char {
    let p = she_last_error();
    if p.is_null() {
        return ptr::null_mut();
    }
    // SAFETY: `p` points at the thread-local CString, alive for this call.
    unsafe { CStr::from_ptr(p) }.to_owned().into_raw()
}
