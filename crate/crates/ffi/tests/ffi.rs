use std::ffi::CStr;
use std::ptr;

use she_mfc_ffi::*;

fn kernel(f: SheKernelFamily, alpha: f64, d: usize) -> *mut SheKernel {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { she_kernel_new(f, alpha, d, &mut k) }, SheStatus::Ok);
    assert!(!k.is_null());
    k
}

fn model(k: *const SheKernel, h: f64) -> *mut SheModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { she_model_new(k, h, 0.0, 1.0, &mut m) }, SheStatus::Ok);
    m
}

fn last_error() -> String {
    let p = she_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn kernel_round_trip() {
    let k = kernel(SheKernelFamily::Heat, 1.0, 1);
    let mut v = 0.0;
    let x = [0.0];
    assert_eq!(unsafe { she_kernel_eval(k, x.as_ptr(), 1, &mut v) }, SheStatus::Ok);
    assert!((v - (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-15);
    assert_eq!(unsafe { she_kernel_spectral(k, x.as_ptr(), 1, &mut v) }, SheStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { she_kernel_mollified(k, 1.0, x.as_ptr(), 1, &mut v) }, SheStatus::Ok);
    assert!((v - (4.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-12);
    let mut rough = -1;
    assert_eq!(unsafe { she_kernel_bound(k, &mut rough, &mut v) }, SheStatus::Ok);
    assert_eq!(rough, 0);
    unsafe { she_kernel_free(k) };
}

#[test]
fn errors_map_to_codes() {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { she_kernel_new(SheKernelFamily::Riesz, 3.0, 2, &mut k) }, SheStatus::InvalidSpec);
    assert!(k.is_null());
    assert!(!last_error().is_empty());

    let k = kernel(SheKernelFamily::Riesz, 1.0, 2);
    let mut v = 0.0;
    let origin = [0.0, 0.0];
    assert_eq!(unsafe { she_kernel_eval(k, origin.as_ptr(), 2, &mut v) }, SheStatus::SingularPoint);
    assert!(last_error().contains("singular"));
    assert_eq!(unsafe { she_kernel_eval(k, ptr::null(), 2, &mut v) }, SheStatus::NullPointer);
    assert_eq!(unsafe { she_kernel_eval(ptr::null(), origin.as_ptr(), 2, &mut v) }, SheStatus::NullPointer);
    assert_eq!(unsafe { she_kernel_eval(k, origin.as_ptr(), 2, ptr::null_mut()) }, SheStatus::NullPointer);

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { she_model_new(k, 0.4, 0.0, 1.0, &mut m) }, SheStatus::Domain);
    unsafe { she_kernel_free(k) };
}

#[test]
fn chaos_and_regime() {
    let k = kernel(SheKernelFamily::Riesz, 1.0, 3);
    let m = model(k, 0.75);
    let mut e = SheEstimate { value: 0.0, std_error: -1.0, n_samples: 9 };
    assert_eq!(unsafe { she_alpha_n(m, 1, 0.5, 0.0, 16, 0, 1, 0, &mut e) }, SheStatus::Ok);
    assert!(e.value > 0.0 && e.std_error == 0.0);
    let mut bound = 0.0;
    assert_eq!(unsafe { she_alpha_n_bound(m, 1, 0.5, &mut bound) }, SheStatus::Ok);
    assert!(e.value <= bound);

    let (mut t2, mut t3, mut big) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { she_critical_t0(m, 2, &mut t2) }, SheStatus::Ok);
    assert_eq!(unsafe { she_critical_t0(m, 3, &mut t3) }, SheStatus::Ok);
    assert!((t3 / t2 - 1.0 / 9.0).abs() < 1e-12);
    assert_eq!(unsafe { she_critical_big_t0(m, &mut big) }, SheStatus::Ok);
    assert!(big.is_finite() && big > 0.0);
    let mut l0 = 0.0;
    assert_eq!(unsafe { she_critical_lambda0(m, 0.1, 0.375, &mut l0) }, SheStatus::Ok);
    assert!(l0 > 0.0);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { she_regime_json(m, 4, &mut s) }, SheStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    assert_eq!(json["verdict"], "EXISTS");
    assert_eq!(json["t0"].as_array().unwrap().len(), 3);
    unsafe { she_string_free(s) };

    unsafe {
        she_model_free(m);
        she_kernel_free(k);
    }
}

#[test]
fn moments_are_deterministic_across_workers() {
    let k = kernel(SheKernelFamily::Heat, 1.0, 1);
    let m = model(k, 0.75);
    let mut a = SheEstimate { value: 0.0, std_error: 0.0, n_samples: 0 };
    let mut b = a;
    assert_eq!(unsafe { she_fk_moment(m, 2, 0.25, 0.1, 32, 256, 5, 1, &mut a) }, SheStatus::Ok);
    assert_eq!(unsafe { she_fk_moment(m, 2, 0.25, 0.1, 32, 256, 5, 3, &mut b) }, SheStatus::Ok);
    assert_eq!(a, b);
    assert!(a.value >= 1.0 && a.n_samples == 256);

    let mut order = 0usize;
    assert_eq!(unsafe { she_second_moment(m, 0.25, 1e-4, 1, 0, &mut order, &mut a) }, SheStatus::Ok);
    assert!(order >= 1 && a.value > 1.0);
    unsafe {
        she_model_free(m);
        she_kernel_free(k);
    }
}

#[test]
fn analytic_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { she_simplex_integral(2, 1.0, -0.5, &mut v) }, SheStatus::Ok);
    assert!((v - std::f64::consts::PI).abs() < 1e-12);
    assert_eq!(unsafe { she_phi(2.0, 1.0, 1e-14, &mut v) }, SheStatus::Ok);
    assert!((v - 2f64.exp()).abs() < 1e-12);
    assert_eq!(unsafe { she_simplex_integral(0, 1.0, 0.0, &mut v) }, SheStatus::Domain);
    let copy = she_last_error_copy();
    assert!(!copy.is_null());
    unsafe { she_string_free(copy) };
    let version = unsafe { CStr::from_ptr(she_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/she_mfc.h")).unwrap();
    for name in [
        "typedef struct SheKernel SheKernel",
        "typedef struct SheModel SheModel",
        "SHE_STATUS_OK = 0",
        "SHE_STATUS_PANIC",
        "SHE_KERNEL_FAMILY_RIESZ",
        "SheEstimate",
        "she_kernel_new",
        "she_kernel_free",
        "she_model_new",
        "she_alpha_n",
        "she_second_moment",
        "she_fk_moment",
        "she_regime_json",
        "she_string_free",
        "she_critical_t0",
        "she_last_error",
    ] {
        assert!(header.contains(name), "header lacks `{name}`");
    }
}
