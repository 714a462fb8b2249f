//! Wiener chaos coefficients of the second moment.
//!
//! For time vectors `s, t in [0, T]^n` let `sigma_jk = s_j ^ s_k + t_j ^ t_k`
//! and `X ~ N(0, sigma (x) I_d)`. Then
//! `psi^(n)(s, t) = (2 pi)^{-nd} int exp(-xi' sigma xi / 2) prod g(xi_j) d xi = E prod f(X_j)`,
//! and with `eps`-damping the covariance becomes `sigma + eps I`.
//!
//! `alpha_n(T) = alpha_H^n int_{[0,T]^{2n}} prod |s_j - t_j|^{2H-2} psi^(n)(s, t)` for
//! `H > 1/2` and `int_{[0,T]^n} psi^(n)(s, s) ds` for `H = 1/2`, so that
//! `E |u(t, x)|^2 = sum_n alpha_n(t) / n!` for unit initial data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{alpha_h, beta_h_constant, check_hurst, gamma, log_gamma};
use crate::error::{Error, Result};
use crate::kernels::{BoundConstants, KernelFamily, KernelSpec};
use crate::mc_engine::{default_workers, parallel_reduce, Estimate, RngStream, StreamingStats};
use crate::quadrature::{gauss_legendre_unit, integrate, integrate_breaks, integrate_half_line, QuadOptions};

/// Kernel plus temporal parameters of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kernel: KernelSpec,
    pub hurst: f64,
    /// Replaces the numerical `beta_H` estimate when set.
    #[serde(default)]
    pub beta_override: Option<f64>,
    /// Prefactor of the rough-kernel moment bounds.
    #[serde(default = "default_c_star")]
    pub c_star: f64,
}

fn default_c_star() -> f64 {
    1.0
}

impl NoiseModel {
    pub fn new(kernel: KernelSpec, hurst: f64) -> Result<Self> {
        let m = Self {
            kernel,
            hurst,
            beta_override: None,
            c_star: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        check_hurst(self.hurst)?;
        if !(self.c_star > 0.0) || !self.c_star.is_finite() {
            return Err(Error::InvalidConfig(format!("c_star must be > 0, got {}", self.c_star)));
        }
        if let Some(b) = self.beta_override {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::InvalidConfig(format!("beta override must be > 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn alpha_h(&self) -> f64 {
        alpha_h(self.hurst)
    }

    pub fn beta_h(&self) -> Result<f64> {
        beta_h_constant(self.hurst, self.beta_override)
    }

    pub fn is_diagonal(&self) -> bool {
        self.hurst == 0.5
    }
}

/// `sigma_jk = s_j ^ s_k + t_j ^ t_k`.
pub fn sigma_matrix(s: &[f64], t: &[f64]) -> Result<DMatrix<f64>> {
    if s.len() != t.len() || s.is_empty() {
        return Err(Error::Domain("time vectors must be non-empty and of equal length".into()));
    }
    if s.iter().chain(t).any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("times must be finite and >= 0".into()));
    }
    let n = s.len();
    Ok(DMatrix::from_fn(n, n, |j, k| s[j].min(s[k]) + t[j].min(t[k])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiMethod {
    /// Closed form or quadrature: any `n` for the heat kernel, `n <= 2` otherwise.
    Deterministic,
    /// Importance sampling in frequency space.
    SpectralMc { samples: u64, seed: u64, stream_id: u64 },
    /// Importance sampling over the Gaussian scale-mixture variables.
    MixingMc { samples: u64, seed: u64, stream_id: u64 },
}

/// `psi^(n)` at time vectors `s, t`, damped by `eps >= 0`.
pub fn psi_n(kernel: &KernelSpec, s: &[f64], t: &[f64], eps: f64, method: PsiMethod) -> Result<Estimate> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("damping must be >= 0, got {eps}")));
    }
    let mut sigma = sigma_matrix(s, t)?;
    for j in 0..sigma.nrows() {
        sigma[(j, j)] += eps;
    }
    psi_sigma(kernel, &sigma, method)
}

/// `E prod f(X_j)` for `X ~ N(0, sigma (x) I_d)`.
pub fn psi_sigma(kernel: &KernelSpec, sigma: &DMatrix<f64>, method: PsiMethod) -> Result<Estimate> {
    match method {
        PsiMethod::Deterministic => psi_deterministic(kernel, sigma).map(Estimate::exact),
        PsiMethod::SpectralMc {
            samples,
            seed,
            stream_id,
        } => {
            check_samples(samples)?;
            let mut rng = RngStream::new(seed, stream_id).rng();
            let mut st = StreamingStats::default();
            let prep = SpectralProposal::new(kernel, sigma)?;
            for _ in 0..samples {
                st.push(prep.sample(kernel, sigma, &mut rng)?);
            }
            Ok(st.estimate())
        }
        PsiMethod::MixingMc {
            samples,
            seed,
            stream_id,
        } => {
            check_samples(samples)?;
            if kernel.family == KernelFamily::Heat {
                return psi_deterministic(kernel, sigma).map(Estimate::exact);
            }
            let mut rng = RngStream::new(seed, stream_id).rng();
            let mut st = StreamingStats::default();
            let prep = MixingProposal::new(kernel, sigma)?;
            for _ in 0..samples {
                st.push(prep.sample(kernel, sigma, &mut rng)?);
            }
            Ok(st.estimate())
        }
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < 2 {
        return Err(Error::InvalidConfig("Monte Carlo needs at least 2 samples".into()));
    }
    Ok(())
}

/// `(2 pi)^{-nd/2} det(sigma + diag(v))^{-d/2}`, or `None` if not positive definite.
fn gaussian_at_zero(sigma: &DMatrix<f64>, diag: &[f64], d: usize) -> Option<f64> {
    let n = sigma.nrows();
    let mut m = sigma.clone();
    for j in 0..n {
        m[(j, j)] += diag[j];
    }
    let ch = m.cholesky()?;
    let ln_det: f64 = (0..n).map(|j| 2.0 * ch.l_dirty()[(j, j)].ln()).sum();
    let df = d as f64;
    Some((-0.5 * n as f64 * df * (2.0 * PI).ln() - 0.5 * df * ln_det).exp())
}

fn not_pd() -> Error {
    Error::Domain("covariance matrix is not positive definite".into())
}

fn psi_deterministic(kernel: &KernelSpec, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = sigma.nrows();
    let d = kernel.d;
    if kernel.family == KernelFamily::Heat {
        return gaussian_at_zero(sigma, &vec![kernel.alpha; n], d).ok_or_else(not_pd);
    }
    match n {
        1 => {
            let v = sigma[(0, 0)];
            if !(v >= 0.0) {
                return Err(not_pd());
            }
            kernel.mollified_sq(v, 0.0)
        }
        2 => {
            let (a, b, c) = (sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)]);
            if !(a >= 0.0 && c >= 0.0 && a * c - b * b >= -1e-15 * (a * c)) {
                return Err(not_pd());
            }
            if kernel.family == KernelFamily::Riesz {
                psi2_riesz(kernel, a, b, c)
            } else {
                psi2_nested(kernel, a, b, c)
            }
        }
        _ => Err(Error::InvalidConfig(format!(
            "deterministic psi is available for n <= 2 (or the heat kernel), got n = {n}"
        ))),
    }
}

/// Riesz `psi^(2)`: the inner mixing integral is a Beta function.
fn psi2_riesz(kernel: &KernelSpec, a: f64, b: f64, c: f64) -> Result<f64> {
    let d = kernel.d as f64;
    let beta = 0.5 * kernel.alpha;
    let kappa = 0.5 * d - beta;
    let ln_pref = -d * (2.0 * PI).ln() + log_gamma(beta)? + log_gamma(kappa)? - log_gamma(0.5 * d)?
        - 2.0 * log_gamma(beta)?;
    let q0 = (a * c - b * b).max(0.0);
    if !(a > 0.0 && c > 0.0) || (q0 == 0.0 && beta <= kappa) {
        return Err(Error::Numerical("psi is infinite for this singular covariance".into()));
    }
    let r = power_mixture(beta, kappa, 0.5 * a, 0.5 * q0 / c)?;
    Ok((ln_pref - beta * 4f64.ln() - kappa * (2.0 * c).ln()).exp() * r)
}

/// `int_0^inf w^{b-1} (A + w)^{-b} (B + w)^{-k} dw` for `A > 0`, `B >= 0`.
///
/// The range is cut at `A` and `B`. Near zero and near infinity the power
/// behaviour is removed by a change of variable, and the middle piece is
/// integrated on a log scale. Each piece is scaled to be of order one and
/// integrated by the double-exponential rule, which is indifferent to the
/// fractional powers left at the ends.
fn power_mixture(b: f64, k: f64, big_a: f64, big_b: f64) -> Result<f64> {
    const TOL: f64 = 1e-11;
    let de = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        let r = quadrature::double_exponential::integrate(f, lo, hi, TOL);
        if r.integral.is_finite() {
            Ok(r.integral)
        } else {
            Err(Error::Numerical("psi integral is not finite".into()))
        }
    };
    let body = |w: f64| (big_a + w).powf(-b) * (big_b + w).powf(-k);
    let lo = big_a.min(big_b);
    let hi = big_a.max(big_b);
    // [0, lo], or [0, A] with the merged power when B = 0.
    let (head, start) = if big_b > 0.0 {
        let (e, s) = (1.0 / b, body(lo));
        (lo.powf(b) / b * s * de(&|v| body(lo * v.powf(e)) / s, 0.0, 1.0)?, lo)
    } else {
        let m = b - k;
        let s = big_a.powf(-b);
        let r = de(&|v| (big_a + big_a * v.powf(1.0 / m)).powf(-b) / s, 0.0, 1.0)?;
        (big_a.powf(m) / m * s * r, hi)
    };
    let middle = if hi > start {
        let s = (big_b + start).powf(-k);
        s * de(&|y| { let w = y.exp(); w.powf(b) * body(w) / s }, start.ln(), hi.ln())?
    } else {
        0.0
    };
    let tail = de(
        &|r| {
            let w = hi * r.powf(-1.0 / k);
            (1.0 + big_a / w).powf(-b) * (1.0 + big_b / w).powf(-k)
        },
        0.0,
        1.0,
    )?;
    Ok(head + middle + hi.powf(-k) / k * tail)
}

fn psi2_nested(kernel: &KernelSpec, a: f64, b: f64, c: f64) -> Result<f64> {
    let d = kernel.d as f64;
    let opts = QuadOptions::with_rel(1e-9);
    let hint = (0.5 * (a + c)).max(1e-3).ln();
    let mut err = None;
    let outer = integrate_half_line(
        |w1| {
            let aa = a + 2.0 * w1;
            let inner = integrate_half_line(
                |w2| {
                    let det = aa * (c + 2.0 * w2) - b * b;
                    kernel.mixing_density(w2) * (2.0 * PI).powf(-d) * det.powf(-0.5 * d)
                },
                hint,
                opts,
            );
            match inner {
                Ok(r) => kernel.mixing_density(w1) * r.value,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        },
        hint,
        opts,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(outer.value)
}

/// Proposal precision for frequency-space sampling: half the smallest
/// eigenvalue of sigma, so that `sigma - cI` stays positive definite and the
/// importance weights are bounded by one.
fn proposal_precision(sigma: &DMatrix<f64>) -> Result<f64> {
    let lmin = sigma.clone().symmetric_eigen().eigenvalues.min();
    if !(lmin > 0.0) {
        return Err(not_pd());
    }
    Ok(0.5 * lmin)
}

struct SpectralProposal {
    c: f64,
    ln_norm: f64,
}

impl SpectralProposal {
    fn new(kernel: &KernelSpec, sigma: &DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows() as f64;
        let d = kernel.d as f64;
        let c = proposal_precision(sigma)?;
        let z = match kernel.family {
            KernelFamily::Riesz => kernel.damped_spectral_mass(c)?,
            _ => (2.0 * PI / c).powf(0.5 * d),
        };
        Ok(Self {
            c,
            ln_norm: n * (z.ln() - d * (2.0 * PI).ln()),
        })
    }

    fn sample<R: Rng>(&self, kernel: &KernelSpec, sigma: &DMatrix<f64>, rng: &mut R) -> Result<f64> {
        let (n, d) = (sigma.nrows(), kernel.d);
        let mut xi = vec![0.0; n * d];
        let mut ln_w = 0.0;
        for j in 0..n {
            ln_w += kernel.sample_spectral(self.c, rng, &mut xi[j * d..(j + 1) * d])?;
        }
        let mut quad = 0.0;
        for j in 0..n {
            for k in 0..n {
                let dot: f64 = (0..d).map(|i| xi[j * d + i] * xi[k * d + i]).sum();
                let s = sigma[(j, k)] - if j == k { self.c } else { 0.0 };
                quad += s * dot;
            }
        }
        Ok((self.ln_norm + ln_w - 0.5 * quad).exp())
    }
}

enum MixingDraw {
    /// `w_j = c_j G1 / G2` (beta-prime), optionally with the Bessel `e^{-w}` factor.
    BetaPrime { g1: Gamma<f64>, g2: Gamma<f64>, ln_const: f64, damped: bool },
    /// Draw straight from the mixing law.
    Direct(Gamma<f64>),
}

struct MixingProposal {
    draw: MixingDraw,
    scales: Vec<f64>,
}

impl MixingProposal {
    fn new(kernel: &KernelSpec, sigma: &DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows();
        let d = kernel.d as f64;
        let beta = 0.5 * kernel.alpha;
        let gm = |shape: f64| {
            Gamma::new(shape, 1.0).map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))
        };
        let scales: Vec<f64> = (0..n).map(|j| (0.5 * sigma[(j, j)]).max(1e-300)).collect();
        let draw = match kernel.family {
            KernelFamily::Riesz | KernelFamily::Bessel if kernel.alpha < kernel.d as f64 => {
                let kappa = 0.5 * d - beta;
                MixingDraw::BetaPrime {
                    g1: gm(beta)?,
                    g2: gm(kappa)?,
                    ln_const: log_gamma(kappa)? - log_gamma(0.5 * d)?,
                    damped: kernel.family == KernelFamily::Bessel,
                }
            }
            KernelFamily::Bessel => MixingDraw::Direct(gm(beta)?),
            KernelFamily::Poisson => MixingDraw::Direct(gm(0.5)?),
            KernelFamily::Riesz | KernelFamily::Heat => unreachable!("handled above"),
        };
        Ok(Self { draw, scales })
    }

    fn sample<R: Rng>(&self, kernel: &KernelSpec, sigma: &DMatrix<f64>, rng: &mut R) -> Result<f64> {
        let n = sigma.nrows();
        let d = kernel.d as f64;
        let beta = 0.5 * kernel.alpha;
        let mut two_w = vec![0.0; n];
        let mut ln_w = 0.0;
        for (slot, &c) in two_w.iter_mut().zip(&self.scales) {
            let w = match &self.draw {
                MixingDraw::BetaPrime {
                    g1,
                    g2,
                    ln_const,
                    damped,
                } => {
                    let w = c * g1.sample(rng) / g2.sample(rng);
                    // m(w) / q(w) = c^beta B(beta, kappa) / Gamma(beta) (1 + w/c)^{d/2}
                    ln_w += beta * c.ln() + ln_const + 0.5 * d * (w / c).ln_1p();
                    if *damped {
                        ln_w -= w;
                    }
                    w
                }
                MixingDraw::Direct(g) => {
                    let x = g.sample(rng);
                    if kernel.family == KernelFamily::Poisson {
                        kernel.alpha * kernel.alpha / (4.0 * x)
                    } else {
                        x
                    }
                }
            };
            *slot = 2.0 * w;
        }
        let base = gaussian_at_zero(sigma, &two_w, kernel.d).ok_or_else(not_pd)?;
        Ok(ln_w.exp() * base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaMethod {
    /// Deterministic quadrature, `n <= 2`. `nodes` is the Gauss-Legendre
    /// size per axis of the four-dimensional rule used for `n = 2, H > 1/2`.
    Quadrature { nodes: usize },
    /// Time pairs drawn exactly from the weight; `psi` evaluated exactly when
    /// possible, else by `inner_samples` mixing draws.
    Mc {
        samples: u64,
        seed: u64,
        stream_id: u64,
        inner_samples: u64,
        workers: Option<usize>,
    },
}

impl AlphaMethod {
    pub fn mc(samples: u64, seed: u64) -> Self {
        Self::Mc {
            samples,
            seed,
            stream_id: 0,
            inner_samples: 4,
            workers: None,
        }
    }
}

/// `alpha_n(t)`.
pub fn alpha_n(model: &NoiseModel, n: usize, t: f64, method: AlphaMethod) -> Result<Estimate> {
    alpha_n_eps(model, n, t, 0.0, method)
}

/// `alpha_{n,eps}(t)`: the same integral with `psi` damped by `eps`.
pub fn alpha_n_eps(model: &NoiseModel, n: usize, t: f64, eps: f64, method: AlphaMethod) -> Result<Estimate> {
    model.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("horizon must be > 0, got {t}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("damping must be >= 0, got {eps}")));
    }
    if n == 0 {
        return Ok(Estimate::exact(1.0));
    }
    if model.kernel.is_rough() && eps == 0.0 {
        let p = model.kernel.d as f64 - model.kernel.alpha;
        if model.hurst <= p / 4.0 {
            return Err(Error::ConditionViolated(format!(
                "alpha_n is infinite unless H > (d - alpha)/4 = {}",
                p / 4.0
            )));
        }
    }
    match method {
        AlphaMethod::Quadrature { nodes } => alpha_quadrature(model, n, t, eps, nodes).map(Estimate::exact),
        AlphaMethod::Mc {
            samples,
            seed,
            stream_id,
            inner_samples,
            workers,
        } => {
            check_samples(samples)?;
            let stream = RngStream::new(seed, stream_id);
            let workers = workers.unwrap_or_else(default_workers);
            let scale = if model.is_diagonal() {
                t.powi(n as i32)
            } else {
                t.powf(2.0 * model.hurst * n as f64)
            };
            let kernel = model.kernel;
            let stats = parallel_reduce(samples, workers, |i| {
                let sub = stream.child(i);
                let mut rng = sub.rng();
                let (s, u) = sample_times(model, n, t, &mut rng);
                let mut sigma = sigma_matrix(&s, &u)?;
                for j in 0..n {
                    sigma[(j, j)] += eps;
                }
                let exact = kernel.family == KernelFamily::Heat || n <= 2;
                let psi = if exact {
                    psi_deterministic(&kernel, &sigma)?
                } else {
                    let m = PsiMethod::MixingMc {
                        samples: inner_samples.max(2),
                        seed: sub.seed,
                        stream_id: sub.child(u64::MAX).stream_id,
                    };
                    psi_sigma(&kernel, &sigma, m)?.value
                };
                Ok(scale * psi)
            })?;
            Ok(stats.estimate())
        }
    }
}

/// Draw `n` time pairs from the normalised weight (`|s-t|^{2H-2}` on
/// `[0,T]^2`, or the diagonal `s = t` with uniform law when `H = 1/2`).
pub fn sample_times<R: Rng>(model: &NoiseModel, n: usize, t: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut s = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        if model.is_diagonal() {
            let x = t * rng.gen::<f64>();
            s.push(x);
            u.push(x);
            continue;
        }
        let e = 1.0 / (2.0 * model.hurst - 1.0);
        // |s - t| has density proportional to δ^{2H-2} (T - δ); sample the
        // power law and accept with probability (T - δ)/T.
        let delta = loop {
            let delta = t * rng.gen::<f64>().powf(e);
            if rng.gen::<f64>() * t < t - delta {
                break delta;
            }
        };
        let lo = (t - delta) * rng.gen::<f64>();
        if rng.gen::<bool>() {
            s.push(lo + delta);
            u.push(lo);
        } else {
            s.push(lo);
            u.push(lo + delta);
        }
    }
    (s, u)
}

fn alpha_quadrature(model: &NoiseModel, n: usize, t: f64, eps: f64, nodes: usize) -> Result<f64> {
    let kernel = model.kernel;
    let h = model.hurst;
    let opts = QuadOptions::with_rel(1e-9);
    match n {
        1 => {
            let phi = |sig: f64| kernel.mollified_sq(sig + eps, 0.0).unwrap_or(f64::NAN);
            if model.is_diagonal() {
                Ok(integrate(|s| phi(2.0 * s), 0.0, t, opts)?.value)
            } else {
                // With u = s + r and v = s - r the weight integrates in closed form over v.
                let r = integrate_breaks(
                    |u| phi(u) * u.min(2.0 * t - u).powf(2.0 * h - 1.0),
                    &[0.0, t, 2.0 * t],
                    opts,
                )?;
                Ok(h * r.value)
            }
        }
        2 if model.is_diagonal() => {
            let opts = QuadOptions::with_rel(1e-8);
            let mut err = None;
            let psi = |s1: f64, s2: f64| {
                let mut sig = DMatrix::from_fn(2, 2, |j, k| {
                    let (a, b) = ([s1, s2][j], [s1, s2][k]);
                    2.0 * a.min(b)
                });
                sig[(0, 0)] += eps;
                sig[(1, 1)] += eps;
                psi_deterministic(&kernel, &sig)
            };
            let outer = integrate(
                |s2| {
                    let inner = integrate(
                        |s1| match psi(s1, s2) {
                            Ok(v) => v,
                            Err(e) => {
                                err.get_or_insert(e);
                                0.0
                            }
                        },
                        0.0,
                        s2,
                        opts,
                    );
                    inner.map(|r| r.value).unwrap_or(f64::NAN)
                },
                0.0,
                t,
                opts,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            Ok(2.0 * outer.value)
        }
        2 => alpha2_tensor(model, t, eps, nodes.max(4)),
        _ => Err(Error::InvalidConfig(format!(
            "quadrature is available for n <= 2, got n = {n}"
        ))),
    }
}

/// Tensor Gauss-Legendre rule for `alpha_2`, `H > 1/2`.
///
/// Each pair `(s, r)` is split by the sign of `s - r`; on the half `s > r`
/// the map `s = T z^2`, `r = s (1 - y^{1/(2H-1)})` absorbs the weight, leaving
/// `alpha_H |s-r|^{2H-2} ds dr = 2 H T^{2H} z^{4H-1} dz dy`.
fn alpha2_tensor(model: &NoiseModel, t: f64, eps: f64, nodes: usize) -> Result<f64> {
    let h = model.hurst;
    let e = 1.0 / (2.0 * h - 1.0);
    // Points (s, r, weight) covering one pair.
    let pair_points = |nodes: usize| {
        let rule = gauss_legendre_unit(nodes);
        let mut pts = Vec::with_capacity(2 * nodes * nodes);
        for &(z, wz) in &rule {
            for &(y, wy) in &rule {
                let s = t * z * z;
                let r = s * (1.0 - y.powf(e));
                let w = 2.0 * h * t.powf(2.0 * h) * z.powf(4.0 * h - 1.0) * wz * wy;
                pts.push((s, r, w));
                pts.push((r, s, w));
            }
        }
        pts
    };
    // The second pair uses one more node so that no point meets itself: at
    // eps = 0 the covariance of two equal pairs is singular and psi is infinite
    // there, although the singularity is integrable.
    let first = pair_points(nodes);
    let second = pair_points(nodes + 1);
    // Rows are summed in parallel and then in order, so the value does not
    // depend on the thread count.
    let rows: Vec<f64> = first
        .par_iter()
        .map(|&(s1, r1, w1)| {
            let mut sig = DMatrix::zeros(2, 2);
            let mut row = 0.0;
            for &(s2, r2, w2) in &second {
                sig[(0, 0)] = s1 + r1 + eps;
                sig[(1, 1)] = s2 + r2 + eps;
                let off = s1.min(s2) + r1.min(r2);
                sig[(0, 1)] = off;
                sig[(1, 0)] = off;
                row += w2 * psi_deterministic(&model.kernel, &sig)?;
            }
            Ok(w1 * row)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

/// Rate `D(t)` of the rough bound `C* D(t)^n (n!)^{(d-alpha)/2}`, with the
/// temporal weight scaled by `weight_ratio = gamma / alpha_H` (one for the
/// fractional weight itself).
pub fn rough_rate(model: &NoiseModel, t: f64, weight_ratio: f64) -> Result<f64> {
    let p = model.kernel.roughness()?;
    let h = model.hurst;
    let q = p / (4.0 * h);
    if q >= 1.0 {
        return Err(Error::ConditionViolated(format!(
            "rough bound needs H > (d - alpha)/4 = {}",
            p / 4.0
        )));
    }
    let dc = match model.kernel.bound_constants()? {
        BoundConstants::Rough { d_const } => d_const,
        BoundConstants::Smooth { .. } => unreachable!("rough kernel"),
    };
    let beta = model.beta_h()?;
    let a = 1.0 - q;
    let ln = dc.ln() - 0.5 * p * 2f64.ln() + weight_ratio.ln() + 2.0 * beta.ln() + 2.0 * h * log_gamma(a)?
        - (2.0 * h - 0.5 * p) * a.ln()
        + (2.0 * h - 0.5 * p) * t.ln();
    Ok(ln.exp())
}

/// Rate `C(t)` of the smooth bound `C(t)^n`, weight scaled as in [`rough_rate`].
pub fn smooth_rate(model: &NoiseModel, t: f64, weight_ratio: f64) -> Result<f64> {
    match model.kernel.bound_constants()? {
        BoundConstants::Smooth { c } => Ok(c * weight_ratio * t.powf(2.0 * model.hurst)),
        BoundConstants::Rough { .. } => Err(Error::InvalidSpec("kernel is rough".into())),
    }
}

/// Upper bound on `alpha_n(t)`.
pub fn alpha_n_bound(model: &NoiseModel, n: usize, t: f64) -> Result<f64> {
    model.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {t}")));
    }
    let nf = n as f64;
    if model.kernel.is_rough() {
        let p = model.kernel.roughness()?;
        let dt = rough_rate(model, t, 1.0)?;
        Ok(model.c_star * (nf * dt.ln() + 0.5 * p * log_gamma(nf + 1.0)?).exp())
    } else {
        Ok(smooth_rate(model, t, 1.0)?.powi(n as i32))
    }
}

/// `sum_{n >= from} c x^n / (n!)^a`, or infinity when the series diverges.
pub fn series_tail(c: f64, x: f64, a: f64, from: usize) -> f64 {
    if x == 0.0 {
        return if from == 0 { c } else { 0.0 };
    }
    if a < 0.0 || (a == 0.0 && x >= 1.0) {
        return f64::INFINITY;
    }
    if a == 0.0 {
        return c * x.powi(from as i32) / (1.0 - x);
    }
    let lx = x.ln();
    let mut sum = 0.0;
    for n in from..from + 10_000_000 {
        let nf = n as f64;
        let ln_term = nf * lx - a * statrs::function::gamma::ln_gamma(nf + 1.0);
        let term = ln_term.exp();
        sum += term;
        let ratio = x / (nf + 1.0).powf(a);
        if ratio < 0.5 && term * ratio / (1.0 - ratio) <= 1e-14 * sum {
            break;
        }
        if !sum.is_finite() {
            return f64::INFINITY;
        }
    }
    c * sum
}

/// Upper bound on `sum_{n > order} alpha_n(t) / n!`.
pub fn second_moment_tail(model: &NoiseModel, t: f64, order: usize) -> Result<f64> {
    if model.kernel.is_rough() {
        let p = model.kernel.roughness()?;
        let dt = rough_rate(model, t, 1.0)?;
        Ok(series_tail(model.c_star, dt, 1.0 - 0.5 * p, order + 1))
    } else {
        let c = smooth_rate(model, t, 1.0)?;
        Ok(series_tail(1.0, c, 1.0, order + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub tail_tol: f64,
    pub max_order: usize,
    /// Gauss-Legendre size per axis for the `n = 2` quadrature.
    pub quadrature_nodes: usize,
    /// Time samples for each `alpha_n` with `n >= 3`.
    pub mc_samples: u64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            tail_tol: 1e-4,
            max_order: 12,
            quadrature_nodes: 16,
            mc_samples: 20_000,
            seed: 1,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub n: usize,
    pub alpha_n: Estimate,
    pub bound: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    /// Partial sum including `alpha_0 = 1`.
    pub value: Estimate,
    pub order: usize,
    pub tail_bound: f64,
    pub terms: Vec<SeriesTerm>,
}

/// `E |u(t, x)|^2 = sum_n alpha_n(t) / n!` for unit initial data, truncated
/// at the smallest order whose tail bound is below `tail_tol`.
pub fn second_moment_series(model: &NoiseModel, t: f64, cfg: &SeriesConfig) -> Result<SeriesResult> {
    model.validate()?;
    if !(cfg.tail_tol > 0.0) {
        return Err(Error::InvalidConfig("tail_tol must be > 0".into()));
    }
    let mut order = None;
    let mut tail = f64::INFINITY;
    for n in 0..=cfg.max_order {
        tail = second_moment_tail(model, t, n)?;
        if tail <= cfg.tail_tol {
            order = Some(n);
            break;
        }
    }
    let order = order.ok_or(Error::NoConvergence {
        order: cfg.max_order,
        tail,
        tol: cfg.tail_tol,
    })?;
    let mut value = 1.0;
    let mut var = 0.0;
    let mut terms = Vec::with_capacity(order);
    let mut ln_fact = 0.0;
    for n in 1..=order {
        ln_fact += (n as f64).ln();
        let (est, method) = if n <= 2 {
            let m = AlphaMethod::Quadrature {
                nodes: cfg.quadrature_nodes,
            };
            (alpha_n(model, n, t, m)?, "quadrature")
        } else {
            let m = AlphaMethod::Mc {
                samples: cfg.mc_samples,
                seed: cfg.seed,
                stream_id: n as u64,
                inner_samples: 4,
                workers: cfg.workers,
            };
            (alpha_n(model, n, t, m)?, "mc")
        };
        let f = (-ln_fact).exp();
        value += est.value * f;
        var += (est.std_error * f).powi(2);
        terms.push(SeriesTerm {
            n,
            alpha_n: est,
            bound: alpha_n_bound(model, n, t)?,
            method: method.into(),
        });
    }
    let n_samples = if order >= 3 { cfg.mc_samples } else { 0 };
    Ok(SeriesResult {
        value: Estimate::new(value, var.sqrt(), n_samples),
        order,
        tail_bound: tail,
        terms,
    })
}

/// Closed form of Riesz `psi^(1)` at variance `v`.
pub fn riesz_psi1(kernel: &KernelSpec, v: f64) -> Result<f64> {
    if kernel.family != KernelFamily::Riesz {
        return Err(Error::InvalidSpec("not a Riesz kernel".into()));
    }
    let d = kernel.d as f64;
    let p = d - kernel.alpha;
    Ok((2.0 * PI).powf(-d) * crate::kernels::sphere_area(kernel.d) * 0.5 * gamma(0.5 * p)? * (2.0 / v).powf(0.5 * p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: KernelFamily, a: f64, d: usize, h: f64) -> NoiseModel {
        NoiseModel::new(KernelSpec::new(f, a, d).unwrap(), h).unwrap()
    }

    #[test]
    fn frozen_sigma_example() {
        let s = sigma_matrix(&[0.2, 0.4], &[0.1, 0.3]).unwrap();
        let want = [[0.3, 0.3], [0.3, 0.7]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((s[(j, k)] - want[j][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn frozen_psi1_values() {
        let r = KernelSpec::new(KernelFamily::Riesz, 1.0, 2).unwrap();
        let v = psi_n(&r, &[0.5], &[0.5], 0.0, PsiMethod::Deterministic).unwrap().value;
        assert!((v - 0.5 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((v - riesz_psi1(&r, 1.0).unwrap()).abs() < 1e-12);
        // Heat d = 1: (2 pi)^{-1} int e^{-xi^2/2} e^{-xi^2/2} = 1/sqrt(4 pi).
        let h = KernelSpec::new(KernelFamily::Heat, 1.0, 1).unwrap();
        let v = psi_n(&h, &[0.5], &[0.5], 0.0, PsiMethod::Deterministic).unwrap().value;
        assert!((v - 0.282_094_791_773_878_1).abs() < 1e-12);
    }

    #[test]
    fn frozen_alpha1_riesz_diagonal() {
        let m = model(KernelFamily::Riesz, 1.0, 2, 0.5);
        let v = alpha_n(&m, 1, 1.0, AlphaMethod::Quadrature { nodes: 8 }).unwrap().value;
        assert!((v - 0.282_094_8).abs() < 1e-7, "{v}");
    }

    #[test]
    fn psi2_deterministic_matches_mixing_mc() {
        let sig = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.6]);
        for spec in [
            KernelSpec::new(KernelFamily::Riesz, 1.0, 2).unwrap(),
            KernelSpec::new(KernelFamily::Bessel, 1.0, 2).unwrap(),
            KernelSpec::new(KernelFamily::Poisson, 1.0, 1).unwrap(),
        ] {
            let det = psi_sigma(&spec, &sig, PsiMethod::Deterministic).unwrap().value;
            let mc = psi_sigma(
                &spec,
                &sig,
                PsiMethod::MixingMc {
                    samples: 200_000,
                    seed: 3,
                    stream_id: 1,
                },
            )
            .unwrap();
            assert!((det - mc.value).abs() < 4.0 * mc.std_error, "{spec:?}: {det} vs {mc:?}");
            let sp = psi_sigma(
                &spec,
                &sig,
                PsiMethod::SpectralMc {
                    samples: 200_000,
                    seed: 4,
                    stream_id: 1,
                },
            )
            .unwrap();
            assert!((det - sp.value).abs() < 4.0 * sp.std_error, "{spec:?}: {det} vs {sp:?}");
        }
    }

    #[test]
    fn alpha2_quadrature_matches_mc() {
        for m in [model(KernelFamily::Heat, 1.0, 1, 0.75), model(KernelFamily::Riesz, 1.0, 2, 0.75)] {
            let q = alpha_n_eps(&m, 2, 0.5, 0.1, AlphaMethod::Quadrature { nodes: 16 }).unwrap().value;
            let mc = alpha_n_eps(&m, 2, 0.5, 0.1, AlphaMethod::mc(100_000, 9)).unwrap();
            assert!((q - mc.value).abs() < 4.0 * mc.std_error, "{m:?}: {q} vs {mc:?}");
        }
    }

    #[test]
    fn pair_sampler_has_right_mean_gap() {
        let m = model(KernelFamily::Heat, 1.0, 1, 0.75);
        let mut rng = RngStream::new(5, 5).rng();
        let mut st = StreamingStats::default();
        for _ in 0..100_000 {
            let (s, u) = sample_times(&m, 1, 1.0, &mut rng);
            st.push((s[0] - u[0]).abs());
        }
        // E|s-t| under alpha_H |s-t|^{2H-2} on [0,1]^2:
        // int 2(1-x) x^{2H-1} / int 2(1-x) x^{2H-2}.
        let h = 0.75;
        let num = 1.0 / (2.0 * h) - 1.0 / (2.0 * h + 1.0);
        let den = 1.0 / (2.0 * h - 1.0) - 1.0 / (2.0 * h);
        assert!((st.mean - num / den).abs() < 4.0 * st.std_error());
    }

    #[test]
    fn series_tail_geometric_and_exponential() {
        assert!((series_tail(1.0, 0.5, 0.0, 1) - 1.0).abs() < 1e-14);
        let e = series_tail(1.0, 1.0, 1.0, 0);
        assert!((e - 1f64.exp()).abs() < 1e-12);
        assert!(series_tail(1.0, 1.0, 0.0, 3).is_infinite());
    }
}
