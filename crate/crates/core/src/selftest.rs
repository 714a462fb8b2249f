//! Fast invariant checks run by `she-mfc selftest`.

use serde::Serialize;

use crate::analytic::{alpha_h, simplex_integral};
use crate::chaos::{alpha_n, psi_n, psi_sigma, series_tail, sigma_matrix, AlphaMethod, NoiseModel, PsiMethod};
use crate::error::Result;
use crate::fk_moments::{fk_moment, FkConfig, InitialCondition};
use crate::kernels::{j_f, BoundConstants, JfMethod, KernelFamily, KernelSpec};
use crate::localtime::{local_time_moments_multi, LocalTimeConfig, WeightSpec};
use crate::regime::{existence_report, Verdict};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Run every check. Monte Carlo checks use `seed` and compare a run on one
/// worker with a run on `workers` workers bit for bit.
pub fn run(seed: u64, workers: usize) -> Vec<Check> {
    vec![
        check("mollified_kernel_limit", || {
            let k = KernelSpec::new(KernelFamily::Riesz, 1.0, 3)?;
            let (f, m) = (k.eval_sq(1.0)?, k.mollified_sq(1e-6, 1.0)?);
            Ok((rel(m, f) < 1e-4, format!("f={f:.8e} p_eps*f={m:.8e}")))
        }),
        check("heat_spectral_at_zero", || {
            let k = KernelSpec::new(KernelFamily::Heat, 0.7, 2)?;
            let g = k.spectral_density_sq(0.0)?;
            Ok(((g - 1.0).abs() < 1e-14, format!("g(0)={g}")))
        }),
        check("jf_uniform_bound", || {
            let mut worst = 0.0f64;
            for (family, alpha, d) in [(KernelFamily::Riesz, 1.5, 3), (KernelFamily::Heat, 1.0, 2)] {
                let k = KernelSpec::new(family, alpha, d)?;
                let y = vec![0.3; d];
                let z = vec![-0.2; d];
                for &(u, v) in &[(0.1, 0.2), (0.5, 0.5), (1.0, 2.0)] {
                    let j = j_f(&k, u, v, &y, &z, JfMethod::Closed)?.value;
                    let b = match k.bound_constants()? {
                        BoundConstants::Smooth { c } => c,
                        BoundConstants::Rough { d_const } => d_const * (u + v).powf(-0.5 * (d as f64 - alpha)),
                    };
                    worst = worst.max(j / b);
                }
            }
            Ok((worst <= 1.0 + 1e-9, format!("max J_f/bound = {worst:.6}")))
        }),
        check("psi_heat_determinant", || {
            let k = KernelSpec::new(KernelFamily::Heat, 0.5, 1)?;
            let (s, t) = ([0.2, 0.4], [0.1, 0.3]);
            let sigma = sigma_matrix(&s, &t)?;
            let det = (sigma[(0, 0)] + 0.5) * (sigma[(1, 1)] + 0.5) - sigma[(0, 1)].powi(2);
            let exact = (2.0 * std::f64::consts::PI).powi(-1) * det.powf(-0.5);
            let got = psi_n(&k, &s, &t, 0.0, PsiMethod::Deterministic)?.value;
            Ok((rel(got, exact) < 1e-12, format!("psi={got:.12e} exact={exact:.12e}")))
        }),
        check("psi_spectral_mc_agrees", || {
            let k = KernelSpec::new(KernelFamily::Riesz, 1.5, 3)?;
            let sigma = sigma_matrix(&[0.2, 0.4], &[0.1, 0.3])?;
            let det = psi_sigma(&k, &sigma, PsiMethod::Deterministic)?.value;
            let mc = psi_sigma(
                &k,
                &sigma,
                PsiMethod::SpectralMc {
                    samples: 20_000,
                    seed,
                    stream_id: 0,
                },
            )?;
            let z = (mc.value - det).abs() / mc.std_error;
            Ok((z < 4.0, format!("det={det:.6e} mc={:.6e} z={z:.2}", mc.value)))
        }),
        check("simplex_integral_n1", || {
            let got = simplex_integral(1, 2.0, 0.5)?;
            let exact = 2f64.powf(1.5) / 1.5;
            Ok((rel(got, exact) < 1e-13, format!("{got:.14e}")))
        }),
        check("alpha1_heat_closed_form", || {
            // alpha_1(t) = int_0^t phi(2s) ds at H = 1/2 with phi(v) = (2 pi (v + a))^{-d/2}.
            let (a, t) = (1.0, 0.5);
            let m = NoiseModel::new(KernelSpec::new(KernelFamily::Heat, a, 2)?, 0.5)?;
            let got = alpha_n(&m, 1, t, AlphaMethod::Quadrature { nodes: 16 })?.value;
            let exact = ((2.0 * t + a) / a).ln() / (4.0 * std::f64::consts::PI);
            Ok((rel(got, exact) < 1e-8, format!("alpha_1={got:.10e} exact={exact:.10e}")))
        }),
        check("series_tail_geometric", || {
            let got = series_tail(2.0, 0.5, 0.0, 3);
            Ok(((got - 0.5).abs() < 1e-14, format!("{got}")))
        }),
        check("regime_truth_table", || {
            let cases = [
                (KernelFamily::Riesz, 1.5, 3, 0.75, Verdict::Exists),
                (KernelFamily::Riesz, 0.5, 4, 0.5, Verdict::NotExists),
                (KernelFamily::Riesz, 1.5, 4, 0.75, Verdict::Unknown),
            ];
            let mut bad = Vec::new();
            for (f, a, d, h, want) in cases {
                let m = NoiseModel::new(KernelSpec::new(f, a, d)?, h)?;
                let got = existence_report(&m, 2)?.verdict;
                if got != want {
                    bad.push(format!("{f} a={a} d={d} H={h}: {got:?}"));
                }
            }
            Ok((bad.is_empty(), if bad.is_empty() { "ok".into() } else { bad.join("; ") }))
        }),
        check("alpha_h_value", || {
            let got = alpha_h(0.75);
            Ok(((got - 0.375).abs() < 1e-15, format!("{got}")))
        }),
        check("localtime_worker_invariance", || {
            let m = NoiseModel::new(KernelSpec::new(KernelFamily::Riesz, 1.5, 3)?, 0.75)?;
            let w = WeightSpec::for_model(&m);
            let mk = |workers| LocalTimeConfig {
                workers: Some(workers),
                ..LocalTimeConfig::new(0.5, 32, 512, seed)
            };
            let a = local_time_moments_multi(&m, &w, 0.1, &[1, 2], &mk(1))?;
            let b = local_time_moments_multi(&m, &w, 0.1, &[1, 2], &mk(workers))?;
            let same = a.iter().zip(&b).all(|(x, y)| x.value.to_bits() == y.value.to_bits());
            let increasing = a[1].value >= a[0].value * a[0].value;
            Ok((same && increasing, format!("E L={:.6e} E L^2={:.6e}", a[0].value, a[1].value)))
        }),
        check("fk_worker_invariance", || {
            let m = NoiseModel::new(KernelSpec::new(KernelFamily::Heat, 1.0, 1)?, 0.5)?;
            let u0 = InitialCondition::default();
            let mk = |workers| FkConfig {
                workers: Some(workers),
                ..FkConfig::new(0.25, 0.1, 32, 512, seed)
            };
            let a = fk_moment(&m, &u0, 2, &mk(1))?;
            let b = fk_moment(&m, &u0, 2, &mk(workers))?;
            let same = a.value.value.to_bits() == b.value.value.to_bits();
            Ok((same && a.value.value >= 1.0, format!("E u^2={:.6e}", a.value.value)))
        }),
    ]
}
