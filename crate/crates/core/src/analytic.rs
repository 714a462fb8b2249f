//! Closed-form special values used throughout the bounds.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// `ln Gamma(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// `Gamma(x)` for `x > 0`.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// `alpha_H = H (2H - 1)`.
pub fn alpha_h(h: f64) -> f64 {
    h * (2.0 * h - 1.0)
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if !(0.5..1.0).contains(&h) {
        return Err(Error::Domain(format!("Hurst index must lie in [1/2, 1), got {h}")));
    }
    Ok(())
}

/// Integral of `[(t - s_n)(s_n - s_{n-1}) ... (s_2 - s_1)]^h` over the
/// ordered simplex `0 < s_1 < ... < s_n < t`:
///
/// `Gamma(1+h)^n / Gamma(n(1+h) + 1) * t^{n(1+h)}`.
pub fn simplex_integral(n: usize, t: f64, h: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("simplex dimension must be >= 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("simplex horizon must be > 0, got {t}")));
    }
    if !(h > -1.0) {
        return Err(Error::Domain(format!("simplex exponent must be > -1, got {h}")));
    }
    let nf = n as f64;
    let a = 1.0 + h;
    let ln = nf * log_gamma(a)? - log_gamma(nf * a + 1.0)? + nf * a * t.ln();
    Ok(ln.exp())
}

/// `ln Phi(x, a)` where `Phi(x, a) = sum_n x^n / (n!)^a`.
pub fn ln_phi_series(x: f64, a: f64, tol: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("Phi needs finite x >= 0, got {x}")));
    }
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("Phi needs a >= 0, got {a}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if a == 0.0 {
        if x >= 1.0 {
            return Err(Error::Divergent(format!("Phi(x, 0) diverges for x = {x} >= 1")));
        }
        return Ok(-(-x).ln_1p());
    }
    const MAX_TERMS: usize = 50_000_000;
    let lx = x.ln();
    // Running sum kept as exp(ln_sum).
    let mut ln_sum = 0.0;
    let mut ln_term = 0.0;
    let mut ln_fact = 0.0;
    for n in 1..MAX_TERMS {
        let nf = n as f64;
        ln_fact += nf.ln();
        ln_term = nf * lx - a * ln_fact;
        ln_sum = log_add(ln_sum, ln_term);
        let ratio = x / (nf + 1.0).powf(a);
        if ratio < 0.5 {
            // Later ratios only shrink, so the tail is dominated by a
            // geometric series.
            let ln_tail = ln_term + ratio.ln() - (1.0 - ratio).ln();
            if ln_tail - ln_sum < tol.ln() {
                return Ok(ln_sum);
            }
        }
    }
    Err(Error::NoConvergence {
        order: MAX_TERMS,
        tail: (ln_term - ln_sum).exp(),
        tol,
    })
}

/// `Phi(x, a) = sum_n x^n / (n!)^a`, summed to relative tolerance `tol`.
pub fn phi_series(x: f64, a: f64, tol: f64) -> Result<f64> {
    ln_phi_series(x, a, tol).map(f64::exp)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `sup_n [ (n!)^a a^{na} / Gamma(na + 1) ]^p`.
///
/// This is the smallest prefactor that turns the explicit simplex bound
/// `(n! / Gamma(na+1))^p` into the form `a^{-nap} (n!)^{(1-a)p}` used by the
/// moment bounds. For `0 < a <= 1` it never exceeds one, so the default
/// prefactor of one is admissible.
pub fn c_star_sup(a: f64, p: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("a must lie in (0, 1], got {a}")));
    }
    let mut best = f64::NEG_INFINITY;
    let mut ln_fact = 0.0;
    for n in 1..=2000usize {
        let nf = n as f64;
        ln_fact += nf.ln();
        let v = a * ln_fact + nf * a * a.ln() - log_gamma(nf * a + 1.0)?;
        best = best.max(v);
    }
    Ok((p * best).exp())
}

/// Number of step-function cells used to estimate `beta_H`.
pub const BETA_CELLS: usize = 64;
/// Multiplicative safety margin applied to the estimated `beta_H^2`.
pub const BETA_INFLATION: f64 = 1.05;

fn beta_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Constant `beta_H` in
/// `alpha_H int int phi(r) phi(s) |r-s|^{2H-2} <= beta_H^2 (int |phi|^{1/H})^{2H}`.
///
/// Exactly one at `H = 1/2`. Otherwise the override is returned when given,
/// else a cached numerical estimate: the ratio is maximised over
/// non-negative step functions on `BETA_CELLS` cells of `[0, 1]` and the
/// maximum is inflated by `BETA_INFLATION` before taking the square root.
pub fn beta_h_constant(h: f64, override_value: Option<f64>) -> Result<f64> {
    check_hurst(h)?;
    if h == 0.5 {
        return Ok(1.0);
    }
    if let Some(b) = override_value {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("beta_H override must be > 0, got {b}")));
        }
        return Ok(b);
    }
    let key = h.to_bits();
    if let Some(&b) = beta_cache().lock().expect("beta cache poisoned").get(&key) {
        return Ok(b);
    }
    let ratio = max_step_ratio(h, BETA_CELLS);
    let b = (BETA_INFLATION * ratio).sqrt();
    beta_cache()
        .lock()
        .expect("beta cache poisoned")
        .insert(key, b);
    Ok(b)
}

/// `alpha_H` times the exact double integral of `|r-s|^{2H-2}` over two
/// grid cells `|i-j| = k` apart, cell width `dt`.
///
/// Equals the covariance of two fBm increments, which keeps the formula
/// valid (and equal to `dt * [k == 0]`) at `H = 1/2`.
pub fn cell_weight(h: f64, dt: f64, k: usize) -> f64 {
    let kf = k as f64;
    let two_h = 2.0 * h;
    let second = (kf + 1.0).powf(two_h) - 2.0 * kf.powf(two_h) + (kf - 1.0).abs().powf(two_h);
    0.5 * dt.powf(two_h) * second
}

/// `alpha_H sum c_i c_j w_{|i-j|} / (dt sum c_i^{1/H})^{2H}` for a step
/// function on `[0, 1]`.
pub fn step_ratio(h: f64, c: &[f64]) -> f64 {
    let m = c.len();
    let dt = 1.0 / m as f64;
    let w: Vec<f64> = (0..m).map(|k| cell_weight(h, dt, k)).collect();
    let mut num = 0.0;
    for i in 0..m {
        for j in 0..m {
            num += c[i] * c[j] * w[i.abs_diff(j)];
        }
    }
    let s: f64 = c.iter().map(|x| x.abs().powf(1.0 / h)).sum::<f64>() * dt;
    num / s.powf(2.0 * h)
}

fn max_step_ratio(h: f64, m: usize) -> f64 {
    let dt = 1.0 / m as f64;
    let p = 1.0 / h;
    let two_h = 2.0 * h;
    let w: Vec<f64> = (0..m).map(|k| cell_weight(h, dt, k)).collect();

    let ascend = |mut c: Vec<f64>| -> f64 {
        // b[i] = sum_j c_j w_{|i-j|}, maintained incrementally.
        let mut b: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| c[j] * w[i.abs_diff(j)]).sum())
            .collect();
        let mut num: f64 = (0..m).map(|i| c[i] * b[i]).sum();
        let mut den: f64 = c.iter().map(|x| x.powf(p)).sum::<f64>() * dt;
        let mut best = num / den.powf(two_h);
        for _sweep in 0..400 {
            let before = best;
            for i in 0..m {
                let ci = c[i];
                let cross = b[i] - ci * w[0];
                let num_rest = num - 2.0 * ci * cross - ci * ci * w[0];
                let den_rest = den - ci.powf(p) * dt;
                let obj = |x: f64| {
                    (num_rest + 2.0 * x * cross + x * x * w[0])
                        / (den_rest + x.powf(p) * dt).max(1e-300).powf(two_h)
                };
                let cmax = c.iter().cloned().fold(0.0, f64::max);
                let x = golden_max(obj, 0.0, 4.0 * cmax.max(1e-12) + ci);
                if obj(x) > obj(ci) {
                    let dx = x - ci;
                    for (j, bj) in b.iter_mut().enumerate() {
                        *bj += dx * w[i.abs_diff(j)];
                    }
                    num = num_rest + 2.0 * x * cross + x * x * w[0];
                    den = den_rest + x.powf(p) * dt;
                    c[i] = x;
                }
            }
            best = num / den.powf(two_h);
            if best - before <= 1e-13 * best {
                break;
            }
        }
        best
    };

    let flat = vec![1.0; m];
    let bump: Vec<f64> = (0..m)
        .map(|i| {
            let x = (i as f64 + 0.5) * dt - 0.5;
            (1.0 + x * x / 0.01).powf(-h)
        })
        .collect();
    ascend(flat).max(ascend(bump))
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn frozen_gamma_values() {
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12 * 24f64.ln());
        let v = log_gamma(0.5).unwrap();
        assert!((v - 0.5 * PI.ln()).abs() < 1e-12 * v.abs());
        assert!((v - 0.572_364_9).abs() < 1e-7);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn frozen_simplex_values() {
        assert!((simplex_integral(3, 2.0, 0.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((simplex_integral(1, 1.0, -0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((simplex_integral(2, 1.0, -0.5).unwrap() - PI).abs() < 1e-12);
        assert!(simplex_integral(2, 1.0, -1.0).is_err());
        assert!(simplex_integral(0, 1.0, 0.0).is_err());
    }

    #[test]
    fn phi_special_cases() {
        let e = phi_series(1.0, 1.0, 1e-14).unwrap();
        assert!((e - 1f64.exp()).abs() < 1e-13);
        let g = phi_series(0.5, 0.0, 1e-14).unwrap();
        assert!((g - 2.0).abs() < 1e-14);
        assert!(matches!(phi_series(1.0, 0.0, 1e-12), Err(Error::Divergent(_))));
        // Large argument with a slowly decaying factorial power stays finite.
        let big = ln_phi_series(200.0, 0.5, 1e-12).unwrap();
        assert!(big.is_finite() && big > 0.0);
    }

    #[test]
    fn c_star_never_exceeds_one() {
        for i in 1..20 {
            let a = i as f64 / 20.0;
            for p in [1.0, 1.2, 1.5, 1.9] {
                assert!(c_star_sup(a, p).unwrap() < 1.0, "a={a} p={p}");
            }
        }
        assert!((c_star_sup(1.0, 1.5).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cell_weights_sum_to_variance() {
        // All cells of a uniform grid on [0, t] sum to t^{2H}.
        let (h, m, t) = (0.7, 50usize, 1.3);
        let dt = t / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += cell_weight(h, dt, i.abs_diff(j));
            }
        }
        assert!((s - t.powf(2.0 * h)).abs() < 1e-10);
        assert_eq!(cell_weight(0.5, 0.1, 3), 0.0);
        assert!((cell_weight(0.5, 0.1, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn beta_is_one_at_half_and_respects_override() {
        assert_eq!(beta_h_constant(0.5, Some(3.0)).unwrap(), 1.0);
        assert_eq!(beta_h_constant(0.8, Some(2.5)).unwrap(), 2.5);
        assert!(beta_h_constant(1.0, None).is_err());
        assert!(beta_h_constant(0.4, None).is_err());
    }
}
