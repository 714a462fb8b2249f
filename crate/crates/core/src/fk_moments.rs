//! Feynman-Kac moments
//! `E[u(t,x)^k] = E[prod_j u0(x + B^j_t) exp(sum_{i<j} L(B^i, B^j))]`
//! estimated over bundles of `k` independent Brownian paths.

use serde::{Deserialize, Serialize};

use crate::chaos::{second_moment_series, NoiseModel, SeriesConfig};
use crate::error::{Error, Result};
use crate::localtime::{evaluator_for, local_time_prefix, CellWeights, WeightSpec};
use crate::mc_engine::{
    default_workers, parallel_map, sample_bundle, summarize_rows, Estimate, PathBundle, RngStream,
};
use crate::quadrature::gauss_hermite_normal;
use crate::regime::critical_time_t0;

/// Builtin bounded continuous initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant { c: f64 },
    /// `amplitude * cos(omega . x)`.
    Cosine { amplitude: f64, omega: Vec<f64> },
    /// `amplitude * exp(-|x|^2 / (2 width^2))`.
    GaussianBump { amplitude: f64, width: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::Constant { c: 1.0 }
    }
}

impl InitialCondition {
    pub fn validate(&self, d: usize) -> Result<()> {
        let ok = match self {
            Self::Constant { c } => c.is_finite(),
            Self::Cosine { amplitude, omega } => {
                if omega.len() != d {
                    return Err(Error::InvalidConfig(format!(
                        "cosine frequency has {} entries, expected {d}",
                        omega.len()
                    )));
                }
                amplitude.is_finite() && omega.iter().all(|w| w.is_finite())
            }
            Self::GaussianBump { amplitude, width } => amplitude.is_finite() && *width > 0.0 && width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid initial condition {self:?}")))
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Self::Constant { c } => c.abs(),
            Self::Cosine { amplitude, .. } | Self::GaussianBump { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn is_constant_one(&self) -> bool {
        matches!(self, Self::Constant { c } if *c == 1.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant { c } => *c,
            Self::Cosine { amplitude, omega } => amplitude * omega.iter().zip(x).map(|(w, y)| w * y).sum::<f64>().cos(),
            Self::GaussianBump { amplitude, width } => {
                let r2: f64 = x.iter().map(|y| y * y).sum();
                amplitude * (-0.5 * r2 / (width * width)).exp()
            }
        }
    }

    /// `p_t u0(x)` in closed form.
    pub fn heat_semigroup_exact(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Self::Constant { c } => *c,
            Self::Cosine { omega, .. } => {
                let w2: f64 = omega.iter().map(|w| w * w).sum();
                (-0.5 * t * w2).exp() * self.eval(x)
            }
            Self::GaussianBump { amplitude, width } => {
                let (w2, d) = (width * width, x.len() as f64);
                let r2: f64 = x.iter().map(|y| y * y).sum();
                amplitude * (w2 / (w2 + t)).powf(0.5 * d) * (-0.5 * r2 / (w2 + t)).exp()
            }
        }
    }
}

/// `p_t u0(x)` by a tensor Gauss-Hermite rule with `n_gauss` nodes per axis.
pub fn heat_semigroup(u0: &InitialCondition, t: f64, x: &[f64], n_gauss: usize) -> Result<f64> {
    u0.validate(x.len())?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 || matches!(u0, InitialCondition::Constant { .. }) {
        return Ok(u0.eval(x));
    }
    if n_gauss == 0 {
        return Err(Error::InvalidConfig("n_gauss must be >= 1".into()));
    }
    let d = x.len();
    let total = n_gauss
        .checked_pow(d as u32)
        .filter(|&n| n <= 50_000_000)
        .ok_or_else(|| Error::InvalidConfig("Gauss-Hermite tensor grid too large".into()))?;
    let rule = gauss_hermite_normal(n_gauss);
    let sd = t.sqrt();
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut w = 1.0;
        for c in 0..d {
            let (z, wz) = rule[rest % n_gauss];
            rest /= n_gauss;
            y[c] = x[c] + sd * z;
            w *= wz;
        }
        sum += w * u0.eval(&y);
    }
    Ok(sum)
}

/// Monte Carlo settings of the Feynman-Kac estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkConfig {
    pub t: f64,
    #[serde(default)]
    pub x: Vec<f64>,
    pub eps: f64,
    pub n_steps: usize,
    pub n_samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl FkConfig {
    pub fn new(t: f64, eps: f64, n_steps: usize, n_samples: u64, seed: u64) -> Self {
        Self {
            t,
            x: Vec::new(),
            eps,
            n_steps,
            n_samples,
            seed,
            stream_id: 0,
            workers: None,
        }
    }

    fn point(&self, d: usize) -> Result<Vec<f64>> {
        match self.x.len() {
            0 => Ok(vec![0.0; d]),
            n if n == d => Ok(self.x.clone()),
            n => Err(Error::InvalidConfig(format!("x has {n} coordinates, expected {d}"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidConfig(format!("t must be > 0, got {}", self.t)));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidConfig(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.n_steps == 0 || self.n_samples < 2 {
            return Err(Error::InvalidConfig("need n_steps >= 1 and n_samples >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: f64,
    pub n_steps: usize,
    pub n_samples: u64,
    pub value: Estimate,
    /// Diagnostic: the estimate with each exponent capped at
    /// `ln(1e3) + mean exponent`.
    pub clipped: Estimate,
    pub clip_count: u64,
    pub regime_note: Option<String>,
}

/// Exponent cap above the mean exponent used by the clipping diagnostic.
pub const CLIP_LOG_SCALE: f64 = 6.907_755_278_982_137;

fn regime_note(model: &NoiseModel, k: usize, t: f64) -> Option<String> {
    match critical_time_t0(model, k) {
        Ok(t0) if t >= t0 => Some(format!("outside proven regime: t = {t} >= t_0({k}) = {t0}")),
        Ok(_) => None,
        Err(Error::OutsideRegime(m)) => Some(format!("outside proven regime: {m}")),
        Err(_) => None,
    }
}

/// Per-bundle sums of pairwise local times, for several `eps` and horizons.
struct BundleSample {
    /// `[eps][checkpoint][k]`: exponent using the first `k + 2` paths.
    exponent: Vec<Vec<Vec<f64>>>,
    /// `[checkpoint][k]`: `prod_j u0(x + B^j)` over the first `k + 2` paths.
    initial: Vec<Vec<f64>>,
}

fn bundle_sample(
    model: &NoiseModel,
    u0: &InitialCondition,
    x: &[f64],
    weights: &CellWeights,
    evals: &[crate::kernels::MollifiedEvaluator],
    paths: &PathBundle,
    checkpoints: &[usize],
) -> Result<BundleSample> {
    let k = paths.k;
    let d = model.kernel.d;
    let mut exponent = vec![vec![vec![0.0; k - 1]; checkpoints.len()]; evals.len()];
    for (e, ev) in evals.iter().enumerate() {
        // Pairs are added in order of their larger index so that the
        // running sums for k and k + 1 paths share every term.
        let mut running = vec![0.0; checkpoints.len()];
        for b in 1..k {
            for a in 0..b {
                let l = local_time_prefix(weights, ev, paths, a, b, checkpoints)?;
                for (r, v) in running.iter_mut().zip(&l) {
                    *r += v;
                }
            }
            for (c, &r) in running.iter().enumerate() {
                exponent[e][c][b - 1] = r;
            }
        }
    }
    let mut initial = vec![vec![0.0; k - 1]; checkpoints.len()];
    let mut y = vec![0.0; d];
    for (c, &m) in checkpoints.iter().enumerate() {
        let mut prod = 1.0;
        for j in 0..k {
            for (yi, (xi, bi)) in y.iter_mut().zip(x.iter().zip(paths.at(j, m))) {
                *yi = xi + bi;
            }
            prod *= u0.eval(&y);
            if j >= 1 {
                initial[c][j - 1] = prod;
            }
        }
    }
    Ok(BundleSample { exponent, initial })
}

fn collect_samples(
    model: &NoiseModel,
    u0: &InitialCondition,
    max_k: usize,
    eps_list: &[f64],
    checkpoints: &[usize],
    cfg: &FkConfig,
) -> Result<Vec<BundleSample>> {
    model.validate()?;
    cfg.validate()?;
    let d = model.kernel.d;
    u0.validate(d)?;
    if max_k < 2 {
        return Err(Error::InvalidConfig(format!("moment order must be >= 2, got {max_k}")));
    }
    let x = cfg.point(d)?;
    let weights = CellWeights::new(&WeightSpec::for_model(model), cfg.n_steps, cfg.t)?;
    let evals = eps_list
        .iter()
        .map(|&e| evaluator_for(&model.kernel, e, cfg.t))
        .collect::<Result<Vec<_>>>()?;
    let stream = RngStream::new(cfg.seed, cfg.stream_id);
    let workers = cfg.workers.unwrap_or_else(default_workers);
    parallel_map(cfg.n_samples, workers, |i| {
        let paths = sample_bundle(stream.child(i), max_k, cfg.n_steps, cfg.t, d)?;
        bundle_sample(model, u0, &x, &weights, &evals, &paths, checkpoints)
    })
}

fn summarize(samples: &[f64], products: &[f64]) -> (Estimate, Estimate, u64) {
    let mean_s = samples.iter().sum::<f64>() / samples.len() as f64;
    let cap = CLIP_LOG_SCALE + mean_s;
    let mut clips = 0;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .zip(products)
        .map(|(&s, &p)| {
            if s > cap {
                clips += 1;
            }
            vec![p * s.exp(), p * s.min(cap).exp()]
        })
        .collect();
    let st = summarize_rows(&rows, 2);
    (st[0].estimate(), st[1].estimate(), clips)
}

/// `E[u(t, x)^k]` at `eps`.
pub fn fk_moment(model: &NoiseModel, u0: &InitialCondition, k: usize, cfg: &FkConfig) -> Result<MomentEstimate> {
    let samples = collect_samples(model, u0, k, &[cfg.eps], &[cfg.n_steps], cfg)?;
    let s: Vec<f64> = samples.iter().map(|b| b.exponent[0][0][k - 2]).collect();
    let p: Vec<f64> = samples.iter().map(|b| b.initial[0][k - 2]).collect();
    let (value, clipped, clip_count) = summarize(&s, &p);
    Ok(MomentEstimate {
        k,
        t: cfg.t,
        x: cfg.point(model.kernel.d)?,
        eps: cfg.eps,
        n_steps: cfg.n_steps,
        n_samples: cfg.n_samples,
        value,
        clipped,
        clip_count,
        regime_note: regime_note(model, k, cfg.t),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrid {
    pub ks: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[i][j]`: order `ks[i]` at horizon `times[j]`.
    pub values: Vec<Vec<Estimate>>,
    /// Bundles whose exponent decreased when a path was added.
    pub k_violations: u64,
    /// Bundles whose exponent decreased along the horizons.
    pub t_violations: u64,
}

/// Moments of orders `2..=max_k` at the grid horizons `checkpoints` (indices
/// into the grid of `[0, cfg.t]`), all on common bundles.
pub fn fk_moment_grid(
    model: &NoiseModel,
    u0: &InitialCondition,
    max_k: usize,
    checkpoints: &[usize],
    cfg: &FkConfig,
) -> Result<MomentGrid> {
    if checkpoints.is_empty() || checkpoints[0] == 0 {
        return Err(Error::InvalidConfig("checkpoints must be positive grid indices".into()));
    }
    let samples = collect_samples(model, u0, max_k, &[cfg.eps], checkpoints, cfg)?;
    let nk = max_k - 1;
    let mut k_violations = 0;
    let mut t_violations = 0;
    for b in &samples {
        let e = &b.exponent[0];
        if e.iter().any(|row| row.windows(2).any(|w| w[1] < w[0])) {
            k_violations += 1;
        }
        if (0..nk).any(|k| e.windows(2).any(|w| w[1][k] < w[0][k])) {
            t_violations += 1;
        }
    }
    let dt = cfg.t / cfg.n_steps as f64;
    let values = (0..nk)
        .map(|k| {
            (0..checkpoints.len())
                .map(|c| {
                    let s: Vec<f64> = samples.iter().map(|b| b.exponent[0][c][k]).collect();
                    let p: Vec<f64> = samples.iter().map(|b| b.initial[c][k]).collect();
                    summarize(&s, &p).0
                })
                .collect()
        })
        .collect();
    Ok(MomentGrid {
        ks: (2..=max_k).collect(),
        times: checkpoints.iter().map(|&m| m as f64 * dt).collect(),
        values,
        k_violations,
        t_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub k: usize,
    pub eps: [f64; 3],
    pub raw: [Estimate; 3],
    /// `2 v(eps/4) - v(eps/2)` per sample; heuristic, assuming a bias linear in `eps`.
    pub value: Estimate,
    pub regime_note: Option<String>,
}

/// Moment at `eps0`, `eps0/2`, `eps0/4` on common bundles, with a Richardson step.
pub fn fk_moment_extrapolated(model: &NoiseModel, u0: &InitialCondition, k: usize, cfg: &FkConfig) -> Result<Extrapolated> {
    let eps = [cfg.eps, 0.5 * cfg.eps, 0.25 * cfg.eps];
    let samples = collect_samples(model, u0, k, &eps, &[cfg.n_steps], cfg)?;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|b| {
            let p = b.initial[0][k - 2];
            let v: Vec<f64> = (0..3).map(|e| p * b.exponent[e][0][k - 2].exp()).collect();
            vec![v[0], v[1], v[2], 2.0 * v[2] - v[1]]
        })
        .collect();
    let st = summarize_rows(&rows, 4);
    Ok(Extrapolated {
        k,
        eps,
        raw: [st[0].estimate(), st[1].estimate(), st[2].estimate()],
        value: st[3].estimate(),
        regime_note: regime_note(model, k, cfg.t),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub t: f64,
    pub fk: Extrapolated,
    pub series: Option<Estimate>,
    pub series_order: Option<usize>,
    #[serde(with = "crate::serde_ext")]
    pub tail: f64,
    #[serde(with = "crate::serde_ext")]
    pub tolerance: f64,
    pub agree: bool,
    pub reason: Option<String>,
}

/// Second moment for `u0 = 1` by the Feynman-Kac and chaos routes.
pub fn compare_with_chaos(model: &NoiseModel, tail_tol: f64, fk_cfg: &FkConfig, series_cfg: &SeriesConfig) -> Result<CompareReport> {
    let u0 = InitialCondition::default();
    let fk = fk_moment_extrapolated(model, &u0, 2, fk_cfg)?;
    let cfg = SeriesConfig {
        tail_tol,
        ..*series_cfg
    };
    match second_moment_series(model, fk_cfg.t, &cfg) {
        Ok(s) => {
            let joint = (fk.value.std_error.powi(2) + s.value.std_error.powi(2)).sqrt();
            let tolerance = (3.0 * joint).max(0.02 * s.value.value) + s.tail_bound;
            let agree = (fk.value.value - s.value.value).abs() <= tolerance;
            Ok(CompareReport {
                t: fk_cfg.t,
                reason: (!agree).then(|| "routes differ by more than the tolerance".into()),
                fk,
                series: Some(s.value),
                series_order: Some(s.order),
                tail: s.tail_bound,
                tolerance,
                agree,
            })
        }
        Err(e @ Error::NoConvergence { tail, .. }) => Ok(CompareReport {
            t: fk_cfg.t,
            fk,
            series: None,
            series_order: None,
            tail,
            tolerance: f64::NAN,
            agree: false,
            reason: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, KernelSpec};

    #[test]
    fn semigroup_closed_forms() {
        let c = InitialCondition::Cosine {
            amplitude: 1.0,
            omega: vec![1.0],
        };
        let v = heat_semigroup(&c, 0.7, &[0.3], 40).unwrap();
        assert!((v - (-0.35f64).exp() * 0.3f64.cos()).abs() < 1e-12);
        let g = InitialCondition::GaussianBump {
            amplitude: 2.0,
            width: 0.5,
        };
        let v = heat_semigroup(&g, 0.3, &[0.2, -0.1], 40).unwrap();
        assert!((v - g.heat_semigroup_exact(0.3, &[0.2, -0.1])).abs() < 1e-10);
        assert_eq!(heat_semigroup(&g, 0.0, &[0.2, 0.1], 4).unwrap(), g.eval(&[0.2, 0.1]));
        assert_eq!(heat_semigroup(&InitialCondition::Constant { c: 3.0 }, 1.0, &[0.0], 4).unwrap(), 3.0);
    }

    #[test]
    fn grid_is_monotone_per_sample() {
        let m = NoiseModel::new(KernelSpec::new(KernelFamily::Heat, 1.0, 1).unwrap(), 0.75).unwrap();
        let cfg = FkConfig::new(0.25, 0.1, 16, 200, 3);
        let g = fk_moment_grid(&m, &InitialCondition::default(), 4, &[4, 8, 12, 16], &cfg).unwrap();
        assert_eq!((g.k_violations, g.t_violations), (0, 0));
        let single = fk_moment(&m, &InitialCondition::default(), 3, &cfg).unwrap();
        assert_eq!(single.value, g.values[1][3]);
    }
}
