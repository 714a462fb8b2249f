//! Existence regimes and critical times.
//!
//! Every finite critical time depends on the configured `beta_H`,
//! `D_{alpha,d}` and `C*`, none of which is sharp; ratios and monotonicity
//! are exact, absolute values are not.

use serde::{Deserialize, Serialize};

use crate::analytic::{alpha_h, log_gamma};
use crate::chaos::{rough_rate, NoiseModel};
use crate::error::{Error, Result};
use crate::kernels::BoundConstants;

/// `d - alpha` within this distance of 2 counts as the boundary dimension.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Exists,
    NotExists,
    /// `H > 1/2`, `2 + alpha < d < 4H + alpha`: neither condition decides.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTime {
    pub k: usize,
    #[serde(with = "crate::serde_ext")]
    pub t0: f64,
}

/// `lambda_0(t) = coefficient * t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda0Law {
    #[serde(with = "crate::serde_ext")]
    pub coefficient: f64,
    pub exponent: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeConstants {
    pub alpha_h: f64,
    pub beta_h: f64,
    /// `D_{alpha,d}` for rough kernels, `C_{alpha,d}` for smooth ones.
    pub kernel_constant: f64,
    pub c_star: f64,
}

/// Cross-checks of the displayed critical formulas against each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDiagnostics {
    /// `lambda_0(t_0(2))`; equals `k(k-1)/2 = 1` only if the two displays agree.
    #[serde(with = "crate::serde_ext")]
    pub lambda0_at_t0_2: f64,
    /// Horizon where the series rate `D(t)` reaches one.
    #[serde(with = "crate::serde_ext")]
    pub rate_one_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub model: NoiseModel,
    pub sufficient_ok: bool,
    pub sufficient_condition: Option<String>,
    pub necessary_ok: bool,
    pub verdict: Verdict,
    pub open_region: bool,
    #[serde(rename = "T0", with = "crate::serde_ext")]
    pub big_t0: f64,
    pub t0: Vec<CriticalTime>,
    pub lambda0: Option<Lambda0Law>,
    pub dalang_ok: bool,
    pub additive_noise_ok: bool,
    pub constants: RegimeConstants,
    pub diagnostics: Option<RegimeDiagnostics>,
    pub parametric_note: String,
}

fn rough_constant(model: &NoiseModel) -> Result<f64> {
    match model.kernel.bound_constants()? {
        BoundConstants::Rough { d_const } => Ok(d_const),
        BoundConstants::Smooth { c } => Ok(c),
    }
}

enum Dim {
    Below,
    Boundary,
    Above,
}

fn dim_class(p: f64) -> Dim {
    if (p - 2.0).abs() <= BOUNDARY_TOL {
        Dim::Boundary
    } else if p < 2.0 {
        Dim::Below
    } else {
        Dim::Above
    }
}

fn smooth_err(model: &NoiseModel) -> Error {
    Error::InvalidSpec(format!(
        "critical times are defined for rough kernels; the {} kernel has none (infinite)",
        model.kernel.family
    ))
}

fn outside(what: &str, model: &NoiseModel) -> Error {
    Error::OutsideRegime(format!(
        "{what} is only defined inside the proven regime; got d - alpha = {} with H = {}",
        model.kernel.d as f64 - model.kernel.alpha,
        model.hurst
    ))
}

/// `ln[D_{alpha,d} beta_H^2 Gamma(1 - 1/(2H))^{2H}]`, shared by the displays.
fn ln_core(model: &NoiseModel) -> Result<f64> {
    let h = model.hurst;
    Ok(rough_constant(model)?.ln() + 2.0 * model.beta_h()?.ln() + 2.0 * h * log_gamma(1.0 - 1.0 / (2.0 * h))?)
}

/// Critical time `T_0` of the second moment.
pub fn critical_time_big_t0(model: &NoiseModel) -> Result<f64> {
    model.validate()?;
    if !model.kernel.is_rough() {
        return Ok(f64::INFINITY);
    }
    let p = model.kernel.roughness()?;
    let h = model.hurst;
    match dim_class(p) {
        Dim::Below => Ok(f64::INFINITY),
        Dim::Boundary if h > 0.5 => {
            let ln = (1.0 - 1.0 / (2.0 * h)).ln() - 2f64.ln() + ln_core(model)?;
            Ok((-ln / (2.0 * h - 1.0)).exp())
        }
        _ => Err(outside("T_0", model)),
    }
}

/// Critical time `t_0(k)` of the `k`-th moment.
pub fn critical_time_t0(model: &NoiseModel, k: usize) -> Result<f64> {
    model.validate()?;
    if k < 2 {
        return Err(Error::Domain(format!("moment order must be >= 2, got {k}")));
    }
    if !model.kernel.is_rough() {
        return Err(smooth_err(model));
    }
    let p = model.kernel.roughness()?;
    let h = model.hurst;
    match dim_class(p) {
        Dim::Below => Ok(f64::INFINITY),
        Dim::Boundary if h > 0.5 => {
            let kk = (k * (k - 1)) as f64;
            let ln = kk.ln() - 2.0 * h * 2f64.ln() + ln_core(model)?;
            Ok((-ln / (2.0 * h - 1.0)).exp())
        }
        _ => Err(outside("t_0(k)", model)),
    }
}

/// Law of `lambda_0(t)` for a weight bounded by `gamma |r-s|^{2H-2}`.
pub fn lambda0_law(model: &NoiseModel, gamma: f64) -> Result<Lambda0Law> {
    model.validate()?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !model.kernel.is_rough() {
        return Err(smooth_err(model));
    }
    let p = model.kernel.roughness()?;
    let h = model.hurst;
    match dim_class(p) {
        Dim::Below => Ok(Lambda0Law {
            coefficient: f64::INFINITY,
            exponent: 1.0 - 2.0 * h,
            gamma,
        }),
        Dim::Boundary if h > 0.5 => {
            let ln = (2.0 * h - 1.0) * (1.0 - 1.0 / (2.0 * h)).ln() + 2f64.ln() - gamma.ln() - ln_core(model)?;
            Ok(Lambda0Law {
                coefficient: ln.exp(),
                exponent: 1.0 - 2.0 * h,
                gamma,
            })
        }
        _ => Err(outside("lambda_0(t)", model)),
    }
}

/// `lambda_0(t)`.
pub fn critical_lambda0(model: &NoiseModel, t: f64, gamma: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    let law = lambda0_law(model, gamma)?;
    Ok(law.coefficient * t.powf(law.exponent))
}

/// Full classification of `model`, with critical times for `k = 2..=max_k`.
pub fn existence_report(model: &NoiseModel, max_k: usize) -> Result<RegimeReport> {
    model.validate()?;
    if max_k < 2 {
        return Err(Error::InvalidConfig(format!("K must be >= 2, got {max_k}")));
    }
    let (a, d, h) = (model.kernel.alpha, model.kernel.d as f64, model.hurst);
    let constants = RegimeConstants {
        alpha_h: alpha_h(h),
        beta_h: model.beta_h()?,
        kernel_constant: rough_constant(model)?,
        c_star: model.c_star,
    };
    let note = "critical times depend on beta_H, D_{alpha,d} and C* as configured".to_string();
    if !model.kernel.is_rough() {
        return Ok(RegimeReport {
            model: *model,
            sufficient_ok: true,
            sufficient_condition: Some("heat or Poisson kernel".into()),
            necessary_ok: true,
            verdict: Verdict::Exists,
            open_region: false,
            big_t0: f64::INFINITY,
            t0: (2..=max_k).map(|k| CriticalTime { k, t0: f64::INFINITY }).collect(),
            lambda0: None,
            dalang_ok: true,
            additive_noise_ok: true,
            constants,
            diagnostics: None,
            parametric_note: note,
        });
    }
    let p = model.kernel.roughness()?;
    let boundary = matches!(dim_class(p), Dim::Boundary);
    let below = matches!(dim_class(p), Dim::Below);
    let (sufficient_ok, cond) = if h > 0.5 && (below || boundary) {
        (true, Some("H > 1/2 and d <= 2 + alpha".to_string()))
    } else if h == 0.5 && below {
        (true, Some("H = 1/2 and d < 2 + alpha".to_string()))
    } else {
        (false, None)
    };
    let necessary_ok = h > p / 4.0;
    let verdict = if sufficient_ok {
        Verdict::Exists
    } else if !necessary_ok {
        Verdict::NotExists
    } else {
        Verdict::Unknown
    };
    let (big_t0, t0, lambda0, diagnostics) = if sufficient_ok {
        let t0 = (2..=max_k)
            .map(|k| critical_time_t0(model, k).map(|t0| CriticalTime { k, t0 }))
            .collect::<Result<Vec<_>>>()?;
        let law = if h > 0.5 { Some(lambda0_law(model, alpha_h(h))?) } else { None };
        let diag = match (boundary, law) {
            (true, Some(law)) => {
                let t2 = t0[0].t0;
                // D(t) grows like t^{2H-1} on the boundary.
                let rate_one = rough_rate(model, 1.0, 1.0)?.powf(-1.0 / (2.0 * h - 1.0));
                Some(RegimeDiagnostics {
                    lambda0_at_t0_2: law.coefficient * t2.powf(law.exponent),
                    rate_one_time: rate_one,
                })
            }
            _ => None,
        };
        (critical_time_big_t0(model)?, t0, law, diag)
    } else {
        (f64::NAN, Vec::new(), None, None)
    };
    Ok(RegimeReport {
        model: *model,
        sufficient_ok,
        sufficient_condition: cond,
        necessary_ok,
        verdict,
        open_region: verdict == Verdict::Unknown,
        big_t0,
        t0,
        lambda0,
        dalang_ok: d < a + 2.0 && !boundary,
        additive_noise_ok: necessary_ok,
        constants,
        diagnostics,
        parametric_note: note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, KernelSpec};

    fn riesz(d: usize, h: f64) -> NoiseModel {
        NoiseModel::new(KernelSpec::new(KernelFamily::Riesz, 1.0, d).unwrap(), h).unwrap()
    }

    #[test]
    fn truth_table() {
        let r = existence_report(&riesz(2, 0.5), 5).unwrap();
        assert_eq!(r.verdict, Verdict::Exists);
        assert!(r.big_t0.is_infinite() && r.dalang_ok && r.additive_noise_ok);
        assert!(r.t0.iter().all(|c| c.t0.is_infinite()));
        let r = existence_report(&riesz(3, 0.5), 5).unwrap();
        assert_eq!(r.verdict, Verdict::NotExists);
        assert!(!r.sufficient_ok && !r.necessary_ok);
        let r = existence_report(&riesz(3, 0.75), 5).unwrap();
        assert_eq!(r.verdict, Verdict::Exists);
        assert!(r.big_t0.is_finite());
        assert!(r.t0.windows(2).all(|w| w[1].t0 < w[0].t0));
    }

    #[test]
    fn t0_ratio_is_exact() {
        let m = riesz(3, 0.75);
        let r = critical_time_t0(&m, 3).unwrap() / critical_time_t0(&m, 2).unwrap();
        assert!((r - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn lambda0_scaling() {
        let m = riesz(3, 0.75);
        let g = alpha_h(0.75);
        let l1 = critical_lambda0(&m, 0.3, g).unwrap();
        let l2 = critical_lambda0(&m, 0.6, g).unwrap();
        assert!((l2 / l1 - 2f64.powf(-0.5)).abs() < 1e-12);
        let l3 = critical_lambda0(&m, 0.3, 2.0 * g).unwrap();
        assert!((l3 / l1 - 0.5).abs() < 1e-12);
        assert!(critical_lambda0(&riesz(2, 0.75), 0.3, g).unwrap().is_infinite());
    }

    #[test]
    fn json_round_trip_keeps_infinity() {
        let r = existence_report(&riesz(2, 0.75), 3).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"T0\":\"inf\""));
        let back: RegimeReport = serde_json::from_str(&s).unwrap();
        assert!(back.big_t0.is_infinite());
    }
}
