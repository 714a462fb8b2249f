//! Regularised intersection local time of two independent Brownian motions,
//! `L_{t,eps} = int int eta(r, s) (p_eps * f)(B1_r - B2_s) dr ds`, with
//! `eta` the fractional weight `alpha_H |r-s|^{2H-2}`, the diagonal (`r = s`)
//! weight of the white-in-time case, or a mollified weight `eta_delta`.

use serde::{Deserialize, Serialize};

use crate::analytic::{cell_weight, check_hurst, phi_series};
use crate::chaos::{rough_rate, smooth_rate, NoiseModel};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MollifiedEvaluator};
use crate::mc_engine::{default_workers, parallel_reduce_multi, sample_bundle, Estimate, PathBundle, RngStream};
use crate::regime::critical_lambda0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `alpha_H |r-s|^{2H-2}`, `H > 1/2`.
    Fractional { hurst: f64 },
    /// `delta(r - s)`.
    Diagonal,
    /// `delta^{-2}` times the covariance of the fBm increments over the
    /// windows `[horizon - s - delta, horizon - s]` (clamped at zero).
    Mollified { hurst: f64, delta: f64, horizon: f64 },
}

impl WeightSpec {
    /// Weight induced by the noise: fractional for `H > 1/2`, diagonal at `H = 1/2`.
    pub fn for_model(model: &NoiseModel) -> Self {
        if model.is_diagonal() {
            Self::Diagonal
        } else {
            Self::Fractional { hurst: model.hurst }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fractional { hurst } => {
                check_hurst(hurst)?;
                if hurst == 0.5 {
                    return Err(Error::InvalidSpec("fractional weight needs H > 1/2; use the diagonal weight".into()));
                }
                Ok(())
            }
            Self::Diagonal => Ok(()),
            Self::Mollified { hurst, delta, horizon } => {
                check_hurst(hurst)?;
                if !(delta > 0.0) || !(horizon > 0.0) || !delta.is_finite() || !horizon.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "mollified weight needs delta > 0 and horizon > 0, got {delta}, {horizon}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The `gamma` with `eta(r, s) <= gamma |r-s|^{2H-2}`, where known.
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Self::Fractional { hurst } => Some(crate::analytic::alpha_h(hurst)),
            _ => None,
        }
    }
}

/// Covariance of fBm increments over `[a1, b1]` and `[a2, b2]`.
fn increment_cov(h: f64, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    let p = |x: f64| x.abs().powf(2.0 * h);
    0.5 * (p(b1 - a2) + p(a1 - b2) - p(b1 - b2) - p(a1 - a2))
}

fn mollified_weight(h: f64, delta: f64, horizon: f64, s1: f64, s2: f64) -> f64 {
    let win = |s: f64| ((horizon - s - delta).max(0.0), horizon - s);
    let (a1, b1) = win(s1);
    let (a2, b2) = win(s2);
    (increment_cov(h, a1, b1, a2, b2) / (delta * delta)).max(0.0)
}

/// `c + k s` on one piece of a window endpoint.
#[derive(Clone, Copy)]
struct Affine {
    c: f64,
    k: f64,
}

/// Window `[a(s), b(s)]` of the mollified weight on `[lo, hi]`, split
/// where the left end is clamped at zero.
fn window_pieces(delta: f64, horizon: f64, lo: f64, hi: f64) -> Vec<(f64, f64, Affine, Affine)> {
    let hi = hi.min(horizon);
    let b = Affine { c: horizon, k: -1.0 };
    let free = Affine { c: horizon - delta, k: -1.0 };
    let clamped = Affine { c: 0.0, k: 0.0 };
    let knee = horizon - delta;
    let mut out = Vec::with_capacity(2);
    if lo < hi.min(knee) {
        out.push((lo, hi.min(knee), free, b));
    }
    if lo.max(knee) < hi {
        out.push((lo.max(knee), hi, clamped, b));
    }
    out
}

/// `int_{u0}^{u1} int_{v0}^{v1} |c + k1 x + k2 y|^q dy dx` for `k1, k2` in `{-1, 0, 1}`.
fn rect_power(c: f64, k1: f64, k2: f64, (u0, u1): (f64, f64), (v0, v1): (f64, f64), q: f64) -> f64 {
    let once = |x: f64| x.signum() * x.abs().powf(q + 1.0) / (q + 1.0);
    let twice = |x: f64| x.abs().powf(q + 2.0) / ((q + 1.0) * (q + 2.0));
    match (k1 != 0.0, k2 != 0.0) {
        (true, true) => {
            let g = |x: f64, y: f64| twice(c + k1 * x + k2 * y);
            (g(u1, v1) - g(u1, v0) - g(u0, v1) + g(u0, v0)) / (k1 * k2)
        }
        (true, false) => (once(c + k1 * u1) - once(c + k1 * u0)) / k1 * (v1 - v0),
        (false, true) => (once(c + k2 * v1) - once(c + k2 * v0)) / k2 * (u1 - u0),
        (false, false) => c.abs().powf(q) * (u1 - u0) * (v1 - v0),
    }
}

/// Exact integral of the mollified weight over the cell `ci x cj`; zero
/// beyond the horizon.
fn mollified_cell(h: f64, delta: f64, horizon: f64, ci: (f64, f64), cj: (f64, f64)) -> f64 {
    let q = 2.0 * h;
    let mut acc = 0.0;
    for (u0, u1, a1, b1) in window_pieces(delta, horizon, ci.0, ci.1) {
        for (v0, v1, a2, b2) in window_pieces(delta, horizon, cj.0, cj.1) {
            let term = |x: Affine, y: Affine| rect_power(x.c - y.c, x.k, -y.k, (u0, u1), (v0, v1), q);
            acc += 0.5 * (term(b1, a2) + term(a1, b2) - term(b1, b2) - term(a1, a2));
        }
    }
    acc / (delta * delta)
}

/// `eta(r, s)`.
pub fn eval_weight(w: &WeightSpec, r: f64, s: f64) -> Result<f64> {
    w.validate()?;
    if !(r >= 0.0 && s >= 0.0) || !r.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!("times must be finite and >= 0, got {r}, {s}")));
    }
    match *w {
        WeightSpec::Fractional { hurst } => {
            if r == s {
                return Err(Error::SingularPoint(format!("fractional weight is singular at r = s = {r}")));
            }
            Ok(crate::analytic::alpha_h(hurst) * (r - s).abs().powf(2.0 * hurst - 2.0))
        }
        WeightSpec::Diagonal => {
            if r == s {
                Err(Error::SingularPoint("the diagonal weight is a point mass on r = s".into()))
            } else {
                Ok(0.0)
            }
        }
        WeightSpec::Mollified { hurst, delta, horizon } => {
            if r > horizon || s > horizon {
                return Err(Error::Domain(format!("times must lie in [0, {horizon}]")));
            }
            Ok(mollified_weight(hurst, delta, horizon, r, s))
        }
    }
}

/// Integrals of the weight over the cells of a uniform grid.
#[derive(Debug, Clone)]
pub enum CellWeights {
    /// `W_ij = w[|i - j|]`, exact for the fractional weight.
    Toeplitz(Vec<f64>),
    /// Only `i = j` cells, each of width `dt`.
    Diagonal(f64),
    /// Dense `n x n` row-major table.
    Full(usize, Vec<f64>),
}

impl CellWeights {
    pub fn new(w: &WeightSpec, n_steps: usize, t: f64) -> Result<Self> {
        w.validate()?;
        if n_steps == 0 || !(t > 0.0) {
            return Err(Error::InvalidConfig("grid needs n_steps >= 1 and t > 0".into()));
        }
        let dt = t / n_steps as f64;
        Ok(match *w {
            WeightSpec::Fractional { hurst } => Self::Toeplitz((0..n_steps).map(|k| cell_weight(hurst, dt, k)).collect()),
            WeightSpec::Diagonal => Self::Diagonal(dt),
            WeightSpec::Mollified { hurst, delta, horizon } => {
                let mut table = vec![0.0; n_steps * n_steps];
                for i in 0..n_steps {
                    for j in 0..n_steps {
                        let ci = (i as f64 * dt, (i + 1) as f64 * dt);
                        let cj = (j as f64 * dt, (j + 1) as f64 * dt);
                        table[i * n_steps + j] = mollified_cell(hurst, delta, horizon, ci, cj);
                    }
                }
                Self::Full(n_steps, table)
            }
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Toeplitz(w) => w[i.abs_diff(j)],
            Self::Diagonal(dt) => {
                if i == j {
                    *dt
                } else {
                    0.0
                }
            }
            Self::Full(n, w) => w[i * n + j],
        }
    }

    /// Sum of all cell weights.
    pub fn total(&self, n_steps: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..n_steps {
            for j in 0..n_steps {
                s += self.at(i, j);
            }
        }
        s
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `L` restricted to `[0, t_m]^2` for every `m` in `checkpoints` (grid
/// indices, increasing, at most `n_steps`). The sum is accumulated one grid
/// index at a time, so values are nondecreasing along the checkpoints and
/// the last value at `m = n_steps` is bit-identical to
/// [`local_time_on_paths`].
pub fn local_time_prefix(
    weights: &CellWeights,
    eval: &MollifiedEvaluator,
    paths: &PathBundle,
    a: usize,
    b: usize,
    checkpoints: &[usize],
) -> Result<Vec<f64>> {
    let n = paths.n_steps;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) || checkpoints.last().is_some_and(|&m| m > n) {
        return Err(Error::InvalidConfig("checkpoints must be increasing grid indices".into()));
    }
    let d = paths.d;
    let m1 = paths.midpoints(a);
    let m2 = paths.midpoints(b);
    let pt1 = |i: usize| &m1[i * d..(i + 1) * d];
    let pt2 = |j: usize| &m2[j * d..(j + 1) * d];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cp = checkpoints.iter().peekable();
    let mut total = 0.0;
    for m in 0..=n {
        while cp.next_if(|&&c| c == m).is_some() {
            out.push(total);
        }
        if m == n {
            break;
        }
        match weights {
            CellWeights::Diagonal(dt) => total += dt * eval.eval_sq(dist2(pt1(m), pt2(m)))?,
            _ => {
                let mut add = weights.at(m, m) * eval.eval_sq(dist2(pt1(m), pt2(m)))?;
                for j in 0..m {
                    add += weights.at(m, j) * eval.eval_sq(dist2(pt1(m), pt2(j)))?;
                    add += weights.at(j, m) * eval.eval_sq(dist2(pt1(j), pt2(m)))?;
                }
                total += add;
            }
        }
    }
    Ok(out)
}

/// `L_{t,eps}` of paths `a` and `b` of a bundle, with precomputed cell
/// weights and kernel evaluator.
pub fn local_time_with(
    weights: &CellWeights,
    eval: &MollifiedEvaluator,
    paths: &PathBundle,
    a: usize,
    b: usize,
) -> Result<f64> {
    Ok(local_time_prefix(weights, eval, paths, a, b, &[paths.n_steps])?[0])
}

/// Kernel evaluator sized for paths on `[0, t]`.
pub fn evaluator_for(kernel: &KernelSpec, eps: f64, t: f64) -> Result<MollifiedEvaluator> {
    MollifiedEvaluator::new(*kernel, eps, 8.0 * (2.0 * t * kernel.d as f64).sqrt())
}

/// `L_{t,eps}` of the two paths of a `k = 2` bundle.
pub fn local_time_on_paths(model: &NoiseModel, w: &WeightSpec, paths: &PathBundle, eps: f64) -> Result<f64> {
    model.validate()?;
    if paths.k != 2 {
        return Err(Error::InvalidConfig(format!("expected a pair of paths, got {}", paths.k)));
    }
    if paths.d != model.kernel.d {
        return Err(Error::InvalidConfig(format!(
            "grid mismatch: paths are {}-dimensional, kernel is {}-dimensional",
            paths.d, model.kernel.d
        )));
    }
    let weights = CellWeights::new(w, paths.n_steps, paths.t)?;
    let eval = evaluator_for(&model.kernel, eps, paths.t)?;
    local_time_with(&weights, &eval, paths, 0, 1)
}

/// Monte Carlo settings shared by the local-time estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTimeConfig {
    pub t: f64,
    pub n_steps: usize,
    pub n_paths: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl LocalTimeConfig {
    pub fn new(t: f64, n_steps: usize, n_paths: u64, seed: u64) -> Self {
        Self {
            t,
            n_steps,
            n_paths,
            seed,
            stream_id: 0,
            workers: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidConfig(format!("t must be > 0, got {}", self.t)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidConfig("n_paths must be >= 2".into()));
        }
        Ok(())
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }

    fn stream(&self) -> RngStream {
        RngStream::new(self.seed, self.stream_id)
    }
}

/// Evaluate `row(L values for each eps, out)` over independent path pairs.
fn pair_reduce<F>(
    model: &NoiseModel,
    w: &WeightSpec,
    eps_list: &[f64],
    cfg: &LocalTimeConfig,
    width: usize,
    row: F,
) -> Result<Vec<crate::mc_engine::StreamingStats>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    model.validate()?;
    cfg.validate()?;
    let weights = CellWeights::new(w, cfg.n_steps, cfg.t)?;
    let evals = eps_list
        .iter()
        .map(|&e| evaluator_for(&model.kernel, e, cfg.t))
        .collect::<Result<Vec<_>>>()?;
    let stream = cfg.stream();
    parallel_reduce_multi(cfg.n_paths, width, cfg.workers(), |i, out| {
        let paths = sample_bundle(stream.child(i), 2, cfg.n_steps, cfg.t, model.kernel.d)?;
        let ls = evals
            .iter()
            .map(|e| local_time_with(&weights, e, &paths, 0, 1))
            .collect::<Result<Vec<_>>>()?;
        row(&ls, out);
        Ok(())
    })
}

/// `E[L_{t,eps}^n]` for each `n` in `orders`, on common paths.
pub fn local_time_moments_multi(
    model: &NoiseModel,
    w: &WeightSpec,
    eps: f64,
    orders: &[usize],
    cfg: &LocalTimeConfig,
) -> Result<Vec<Estimate>> {
    if orders.contains(&0) {
        return Err(Error::InvalidConfig("moment order must be >= 1".into()));
    }
    let stats = pair_reduce(model, w, &[eps], cfg, orders.len(), |ls, out| {
        for (o, &n) in out.iter_mut().zip(orders) {
            *o = ls[0].powi(n as i32);
        }
    })?;
    Ok(stats.iter().map(|s| s.estimate()).collect())
}

/// `E[L_{t,eps}^n]`.
pub fn local_time_moments(model: &NoiseModel, w: &WeightSpec, eps: f64, n: usize, cfg: &LocalTimeConfig) -> Result<Estimate> {
    Ok(local_time_moments_multi(model, w, eps, &[n], cfg)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub lambda: f64,
    pub value: Estimate,
    /// `lambda_0(t)` for the weight, when defined.
    pub lambda0: Option<f64>,
    pub warning: Option<String>,
}

/// `E[exp(lambda L_{t,eps})]`.
pub fn exp_moment(model: &NoiseModel, w: &WeightSpec, eps: f64, lambda: f64, cfg: &LocalTimeConfig) -> Result<ExpMoment> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    let lambda0 = match w.gamma() {
        Some(g) if model.kernel.is_rough() => critical_lambda0(model, cfg.t, g).ok(),
        _ => None,
    };
    let warning = lambda0.filter(|&l0| lambda >= l0).map(|l0| {
        format!("lambda = {lambda} is not below lambda_0(t) = {l0}; the estimator variance may be unbounded")
    });
    let stats = pair_reduce(model, w, &[eps], cfg, 1, |ls, out| out[0] = (lambda * ls[0]).exp())?;
    Ok(ExpMoment {
        lambda,
        value: stats[0].estimate(),
        lambda0,
        warning,
    })
}

/// Upper bound on `sup_eps E[exp(lambda L_{t,eps})]`.
///
/// Smooth kernels: `exp(lambda C(t))`. Rough kernels:
/// `C* Phi(lambda D(t), 1 - (d-alpha)/2)`, infinite when the series diverges.
pub fn exp_moment_bound(model: &NoiseModel, w: &WeightSpec, t: f64, lambda: f64) -> Result<f64> {
    model.validate()?;
    w.validate()?;
    let m = match *w {
        WeightSpec::Fractional { hurst } => NoiseModel { hurst, ..*model },
        // Point mass on the diagonal: unit row norm and no beta factor.
        WeightSpec::Diagonal => NoiseModel {
            hurst: 0.5,
            beta_override: None,
            ..*model
        },
        WeightSpec::Mollified { .. } => {
            return Err(Error::InvalidConfig("no exponential-moment bound is implemented for the mollified weight".into()))
        }
    };
    if !model.kernel.is_rough() {
        return Ok((lambda * smooth_rate(&m, t, 1.0)?).exp());
    }
    let p = m.kernel.roughness()?;
    if p > 2.0 {
        return Err(Error::ConditionViolated(format!("exponential moments need d <= 2 + alpha, got d - alpha = {p}")));
    }
    let x = lambda * rough_rate(&m, t, 1.0)?;
    match phi_series(x, 1.0 - 0.5 * p, 1e-12) {
        Ok(v) => Ok(m.c_star * v),
        Err(Error::Divergent(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub moment1: Estimate,
    pub moment2: Estimate,
    /// `E[L_eps - L_prev]` against the previous (larger) `eps`.
    pub diff: Option<Estimate>,
    /// `sqrt(E[(L_eps - L_prev)^2])`, the L2 Cauchy diagnostic.
    pub l2_diff: Option<f64>,
}

/// First and second moments of `L_{t,eps}` along a decreasing `eps` list,
/// all on the same path pairs.
pub fn convergence_study(
    model: &NoiseModel,
    w: &WeightSpec,
    eps_list: &[f64],
    cfg: &LocalTimeConfig,
) -> Result<Vec<ConvergenceRow>> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::InvalidConfig(
            "eps list must hold at least two strictly decreasing values".into(),
        ));
    }
    let m = eps_list.len();
    let stats = pair_reduce(model, w, eps_list, cfg, 4 * m, |ls, out| {
        for j in 0..m {
            out[4 * j] = ls[j];
            out[4 * j + 1] = ls[j] * ls[j];
            let dl = if j == 0 { 0.0 } else { ls[j] - ls[j - 1] };
            out[4 * j + 2] = dl;
            out[4 * j + 3] = dl * dl;
        }
    })?;
    Ok((0..m)
        .map(|j| ConvergenceRow {
            eps: eps_list[j],
            moment1: stats[4 * j].estimate(),
            moment2: stats[4 * j + 1].estimate(),
            diff: (j > 0).then(|| stats[4 * j + 2].estimate()),
            l2_diff: (j > 0).then(|| stats[4 * j + 3].mean.sqrt()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn heat(h: f64) -> NoiseModel {
        NoiseModel::new(KernelSpec::new(KernelFamily::Heat, 1.0, 1).unwrap(), h).unwrap()
    }

    #[test]
    fn frozen_weight_values() {
        let f = WeightSpec::Fractional { hurst: 0.75 };
        assert!((eval_weight(&f, 0.0, 1.0).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(eval_weight(&f, 0.3, 0.3), Err(Error::SingularPoint(_))));
        let m = WeightSpec::Mollified {
            hurst: 0.5,
            delta: 0.1,
            horizon: 1.0,
        };
        assert!((eval_weight(&m, 0.4, 0.4).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(eval_weight(&m, 0.2, 0.35).unwrap(), 0.0);
        assert_eq!(eval_weight(&WeightSpec::Diagonal, 0.2, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn zero_paths_give_closed_forms() {
        let want = (4.0 * std::f64::consts::PI).powf(-0.5);
        for h in [0.5, 0.75] {
            let m = heat(h);
            let paths = PathBundle::zeros(2, 64, 1, 1.0);
            let v = local_time_on_paths(&m, &WeightSpec::for_model(&m), &paths, 1.0).unwrap();
            assert!((v - want).abs() < 1e-12, "H={h}: {v}");
        }
    }

    #[test]
    fn mollified_cells_match_brute_force() {
        let (h, delta, horizon) = (0.7, 0.05, 1.0);
        let rule = crate::quadrature::gauss_legendre_unit(40);
        let brute = |ci: (f64, f64), cj: (f64, f64)| {
            let mut acc = 0.0;
            for &(x, wx) in &rule {
                for &(y, wy) in &rule {
                    let s1 = ci.0 + x * (ci.1 - ci.0);
                    let s2 = cj.0 + y * (cj.1 - cj.0);
                    acc += wx * wy * mollified_weight(h, delta, horizon, s1, s2);
                }
            }
            acc * (ci.1 - ci.0) * (cj.1 - cj.0)
        };
        // Each cell pair stays on one side of the kinks at |s1 - s2| = delta and s = horizon - delta.
        for (ci, cj) in [((0.0, 0.04), (0.5, 0.54)), ((0.2, 0.24), (0.3, 0.34)), ((0.96, 1.0), (0.0, 0.04)), ((0.96, 0.98), (0.98, 1.0))] {
            let exact = mollified_cell(h, delta, horizon, ci, cj);
            let b = brute(ci, cj);
            assert!((exact - b).abs() <= 1e-8 * b.abs().max(1e-12), "{ci:?} {cj:?}: {exact} vs {b}");
        }
    }

    #[test]
    fn fractional_cell_weights_sum_to_t_power() {
        let w = CellWeights::new(&WeightSpec::Fractional { hurst: 0.7 }, 100, 2.0).unwrap();
        assert!((w.total(100) - 2f64.powf(1.4)).abs() < 1e-11);
    }

    #[test]
    fn prefix_is_monotone_and_matches_full() {
        let m = heat(0.75);
        let w = WeightSpec::for_model(&m);
        let paths = sample_bundle(RngStream::new(1, 2), 2, 32, 1.0, 1).unwrap();
        let weights = CellWeights::new(&w, 32, 1.0).unwrap();
        let ev = evaluator_for(&m.kernel, 0.1, 1.0).unwrap();
        let p = local_time_prefix(&weights, &ev, &paths, 0, 1, &[8, 16, 24, 32]).unwrap();
        assert!(p.windows(2).all(|x| x[0] <= x[1]));
        assert_eq!(p[3], local_time_with(&weights, &ev, &paths, 0, 1).unwrap());
    }

    #[test]
    fn eps_list_must_decrease() {
        let m = heat(0.5);
        let cfg = LocalTimeConfig::new(1.0, 8, 10, 1);
        let r = convergence_study(&m, &WeightSpec::Diagonal, &[0.1, 0.1], &cfg);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
