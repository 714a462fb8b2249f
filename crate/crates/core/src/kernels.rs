//! Spatial covariance kernels `f` and their spectral densities `g`.
//!
//! Conventions: `f(x) = (2 pi)^{-d} int e^{-i xi.x} g(xi) d xi` and
//! `p_v(x) = (2 pi v)^{-d/2} e^{-|x|^2 / (2v)}`.
//!
//! Every family is a Gaussian scale mixture `f(x) = int_0^inf m(w) p_{2w}(x) dw`
//! (the heat kernel is the degenerate mixture with an atom), so
//! `g(xi) = int m(w) e^{-w |xi|^2} dw` and `(p_eps * f)(x) = int m(w) p_{2w+eps}(x) dw`.
//! The mixing densities are
//!
//! | family  | `m(w)`                                        |
//! |---------|-----------------------------------------------|
//! | Riesz   | `w^{a/2-1} / Gamma(a/2)`                      |
//! | Bessel  | `w^{a/2-1} e^{-w} / Gamma(a/2)`               |
//! | Poisson | `a / (2 sqrt(pi)) w^{-3/2} e^{-a^2 / (4w)}`   |

use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::analytic::{gamma, log_gamma};
use crate::error::{Error, Result};
use crate::mc_engine::{normal, Estimate, RngStream, StreamingStats};
use crate::quadrature::{integrate_half_line, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Riesz,
    Bessel,
    Heat,
    Poisson,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "riesz" => Ok(Self::Riesz),
            "bessel" => Ok(Self::Bessel),
            "heat" => Ok(Self::Heat),
            "poisson" => Ok(Self::Poisson),
            other => Err(Error::InvalidSpec(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Riesz => "riesz",
            Self::Bessel => "bessel",
            Self::Heat => "heat",
            Self::Poisson => "poisson",
        };
        f.write_str(s)
    }
}

/// A validated kernel: family, parameter `alpha` and spatial dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub alpha: f64,
    pub d: usize,
}

/// Constants of the uniform bounds on `J_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BoundConstants {
    /// `J_f <= c`.
    Smooth { c: f64 },
    /// `J_f(u, v, y, z) <= d_const (u + v)^{-(d - alpha)/2}`.
    Rough { d_const: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JfMethod {
    Closed,
    Mc { samples: u64, seed: u64, stream_id: u64 },
}

/// Gaussian density `p_v` at squared radius `r2` in dimension `d`.
pub fn heat_density(v: f64, r2: f64, d: usize) -> f64 {
    (2.0 * PI * v).powf(-0.5 * d as f64) * (-0.5 * r2 / v).exp()
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * PI.powf(h) / statrs::function::gamma::gamma(h)
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

const KERNEL_QUAD: QuadOptions = QuadOptions {
    abs_tol: 1e-300,
    rel_tol: 1e-11,
    max_intervals: 4000,
};

impl KernelSpec {
    pub fn new(family: KernelFamily, alpha: f64, d: usize) -> Result<Self> {
        let s = Self { family, alpha, d };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("dimension must be >= 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidSpec(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.family == KernelFamily::Riesz && self.alpha >= self.d as f64 {
            return Err(Error::InvalidSpec(format!(
                "Riesz kernel needs 0 < alpha < d, got alpha = {} with d = {}",
                self.alpha, self.d
            )));
        }
        Ok(())
    }

    pub fn is_rough(&self) -> bool {
        matches!(self.family, KernelFamily::Riesz | KernelFamily::Bessel)
    }

    /// `d - alpha` for rough kernels.
    pub fn roughness(&self) -> Result<f64> {
        if !self.is_rough() {
            return Err(Error::InvalidSpec(format!("{} kernel is not rough", self.family)));
        }
        let r = self.d as f64 - self.alpha;
        if r <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "rough-kernel bounds need alpha < d, got alpha = {} with d = {}",
                self.alpha, self.d
            )));
        }
        Ok(r)
    }

    /// `gamma_{alpha,d}` of the Riesz kernel.
    pub fn riesz_constant(&self) -> f64 {
        let (a, d) = (self.alpha, self.d as f64);
        let ln = statrs::function::gamma::ln_gamma(0.5 * (d - a)) - a * 2f64.ln()
            - 0.5 * d * PI.ln()
            - statrs::function::gamma::ln_gamma(0.5 * a);
        ln.exp()
    }

    fn bessel_prefactor(&self) -> f64 {
        (4.0 * PI).powf(-0.5 * self.d as f64) / statrs::function::gamma::gamma(0.5 * self.alpha)
    }

    fn poisson_constant(&self) -> f64 {
        let h = 0.5 * (self.d as f64 + 1.0);
        PI.powf(-h) * statrs::function::gamma::gamma(h)
    }

    /// Mixing density `m(w)`; zero for the heat kernel, which is an atom at `alpha/2`.
    pub(crate) fn mixing_density(&self, w: f64) -> f64 {
        let a = self.alpha;
        match self.family {
            KernelFamily::Riesz => (0.5 * a - 1.0) * w.ln() - statrs::function::gamma::ln_gamma(0.5 * a),
            KernelFamily::Bessel => {
                (0.5 * a - 1.0) * w.ln() - w - statrs::function::gamma::ln_gamma(0.5 * a)
            }
            KernelFamily::Poisson => (0.5 * a / PI.sqrt()).ln() - 1.5 * w.ln() - a * a / (4.0 * w),
            KernelFamily::Heat => f64::NEG_INFINITY,
        }
        .exp()
    }

    /// `int_0^inf m(w) F(2w) dw` for a non-negative `F`, given a log-scale hint.
    pub(crate) fn mix<F: Fn(f64) -> f64>(&self, hint: f64, f: F) -> Result<f64> {
        if self.family == KernelFamily::Heat {
            return Ok(f(self.alpha));
        }
        let r = integrate_half_line(|w| self.mixing_density(w) * f(2.0 * w), hint, KERNEL_QUAD)?;
        Ok(r.value)
    }

    /// `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.eval_sq(norm_sq(x))
    }

    /// `f` at squared radius `r2`.
    pub fn eval_sq(&self, r2: f64) -> Result<f64> {
        let (a, d) = (self.alpha, self.d as f64);
        match self.family {
            KernelFamily::Heat => Ok(heat_density(a, r2, self.d)),
            KernelFamily::Poisson => Ok(self.poisson_constant() * a * (r2 + a * a).powf(-0.5 * (d + 1.0))),
            KernelFamily::Riesz => {
                if r2 == 0.0 {
                    return Err(Error::SingularPoint("Riesz kernel at x = 0".into()));
                }
                Ok(self.riesz_constant() * r2.powf(0.5 * (a - d)))
            }
            KernelFamily::Bessel => {
                if r2 == 0.0 {
                    if a <= d {
                        return Err(Error::SingularPoint("Bessel kernel at x = 0 with alpha <= d".into()));
                    }
                    return Ok(self.bessel_prefactor() * gamma(0.5 * (a - d))?);
                }
                // f(r) = pref * int w^{(a-d)/2 - 1} e^{-w - r^2/(4w)} dw; the
                // integrand peaks where w^2 - nu w - r^2/4 = 0.
                let nu = 0.5 * (a - d) - 1.0;
                let peak = 0.5 * (nu + (nu * nu + r2).sqrt());
                let pref = self.bessel_prefactor();
                let v = integrate_half_line(
                    |w| ((nu) * w.ln() - w - 0.25 * r2 / w).exp(),
                    peak.max(1e-300).ln(),
                    KERNEL_QUAD,
                )?;
                Ok(pref * v.value)
            }
        }
    }

    /// Spectral density `g(xi)`.
    pub fn spectral_density(&self, xi: &[f64]) -> Result<f64> {
        self.check_dim(xi.len())?;
        self.spectral_density_sq(norm_sq(xi))
    }

    pub fn spectral_density_sq(&self, q: f64) -> Result<f64> {
        let a = self.alpha;
        Ok(match self.family {
            KernelFamily::Riesz => {
                if q == 0.0 {
                    return Err(Error::SingularPoint("Riesz spectral density at xi = 0".into()));
                }
                q.powf(-0.5 * a)
            }
            KernelFamily::Bessel => (1.0 + q).powf(-0.5 * a),
            KernelFamily::Heat => (-0.5 * a * q).exp(),
            KernelFamily::Poisson => (-a * q.sqrt()).exp(),
        })
    }

    /// `(p_eps * f)(x)`; equals `f(x)` at `eps = 0`.
    pub fn mollified(&self, eps: f64, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.mollified_sq(eps, norm_sq(x))
    }

    pub fn mollified_sq(&self, eps: f64, r2: f64) -> Result<f64> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("mollification scale must be >= 0, got {eps}")));
        }
        if eps == 0.0 {
            return self.eval_sq(r2);
        }
        let d = self.d;
        match self.family {
            KernelFamily::Heat => Ok(heat_density(self.alpha + eps, r2, d)),
            KernelFamily::Riesz if r2 == 0.0 => Ok(self.riesz_centered(eps)),
            _ => {
                let hint = (0.5 * (r2 / d as f64 + eps)).ln();
                self.mix(hint, |v| heat_density(v + eps, r2, d))
            }
        }
    }

    /// `gamma_{alpha,d} E|sqrt(v) N|^{alpha-d}` for `N ~ N(0, I_d)`.
    fn riesz_centered(&self, v: f64) -> f64 {
        let (a, d) = (self.alpha, self.d as f64);
        let p = d - a;
        let ln = (-0.5 * p) * (v.ln() + 2f64.ln()) + statrs::function::gamma::ln_gamma(0.5 * a)
            - statrs::function::gamma::ln_gamma(0.5 * d);
        self.riesz_constant() * ln.exp()
    }

    /// Constants of the uniform bound on `J_f` (smooth or rough form).
    pub fn bound_constants(&self) -> Result<BoundConstants> {
        let (a, d) = (self.alpha, self.d as f64);
        match self.family {
            KernelFamily::Heat => Ok(BoundConstants::Smooth {
                c: (2.0 * PI * a).powf(-0.5 * d),
            }),
            KernelFamily::Poisson => Ok(BoundConstants::Smooth {
                c: self.poisson_constant() * a.powf(-d),
            }),
            KernelFamily::Riesz => {
                let p = self.roughness()?;
                let ln = -0.5 * p * 2f64.ln() + log_gamma(0.5 * a)? - log_gamma(0.5 * d)?;
                Ok(BoundConstants::Rough {
                    d_const: self.riesz_constant() * ln.exp(),
                })
            }
            KernelFamily::Bessel => {
                let p = self.roughness()?;
                let k = 2.0 * d / (a * p);
                Ok(BoundConstants::Rough {
                    d_const: self.bessel_prefactor() * k * 2f64.powf(0.5 * p),
                })
            }
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.d {
            return Err(Error::Domain(format!(
                "point has dimension {n}, kernel has dimension {}",
                self.d
            )));
        }
        Ok(())
    }

    /// Integral of `e^{-c |xi|^2 / 2} g(xi)` over `R^d`.
    pub(crate) fn damped_spectral_mass(&self, c: f64) -> Result<f64> {
        let d = self.d as f64;
        match self.family {
            KernelFamily::Riesz => {
                let p = d - self.alpha;
                Ok(sphere_area(self.d) * 0.5 * gamma(0.5 * p)? * (2.0 / c).powf(0.5 * p))
            }
            KernelFamily::Heat => Ok((2.0 * PI / (c + self.alpha)).powf(0.5 * d)),
            _ => {
                // (2 pi)^d (p_c * f)(0) by the mixture representation.
                Ok((2.0 * PI).powf(d) * self.mollified_sq(c, 0.0)?)
            }
        }
    }

    /// Draw `xi` from the density proportional to `e^{-c|xi|^2/2} g(xi)` for
    /// the Riesz family, or from `N(0, I/c)` otherwise. Returns the log of the
    /// importance factor `g(xi) / proposal-kernel` (zero for Riesz).
    pub(crate) fn sample_spectral<R: rand::Rng>(&self, c: f64, rng: &mut R, out: &mut [f64]) -> Result<f64> {
        let d = self.d;
        for v in out.iter_mut() {
            *v = normal(rng);
        }
        match self.family {
            KernelFamily::Riesz => {
                let shape = 0.5 * (d as f64 - self.alpha);
                let g = Gamma::new(shape, 2.0 / c)
                    .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
                let rho = g.sample(rng).sqrt();
                let n = norm_sq(out).sqrt();
                for v in out.iter_mut() {
                    *v *= rho / n;
                }
                Ok(0.0)
            }
            _ => {
                let s = c.sqrt();
                for v in out.iter_mut() {
                    *v /= s;
                }
                Ok(self.spectral_density_sq(norm_sq(out))?.ln())
            }
        }
    }
}

/// `f(x)`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    spec.eval(x)
}

/// `g(xi)`.
pub fn eval_spectral_density(spec: &KernelSpec, xi: &[f64]) -> Result<f64> {
    spec.spectral_density(xi)
}

/// `(p_eps * f)(x)`.
pub fn mollified_kernel(spec: &KernelSpec, eps: f64, x: &[f64]) -> Result<f64> {
    spec.mollified(eps, x)
}

/// Constants of the uniform bound on `J_f`.
pub fn bound_constants(spec: &KernelSpec) -> Result<BoundConstants> {
    spec.bound_constants()
}

/// `J_f(u, v, y, z) = E f(y - z + sqrt(u) Y - sqrt(v) Z)` with `Y, Z`
/// independent standard normals in `R^d`.
pub fn j_f(spec: &KernelSpec, u: f64, v: f64, y: &[f64], z: &[f64], method: JfMethod) -> Result<Estimate> {
    if !(u >= 0.0 && v >= 0.0) || !(u + v).is_finite() {
        return Err(Error::Domain(format!("J_f needs u, v >= 0, got u = {u}, v = {v}")));
    }
    if y.len() != spec.d || z.len() != spec.d {
        return Err(Error::Domain("J_f points must have the kernel dimension".into()));
    }
    let diff: Vec<f64> = y.iter().zip(z).map(|(a, b)| a - b).collect();
    match method {
        JfMethod::Closed => Ok(Estimate::exact(spec.mollified(u + v, &diff)?)),
        JfMethod::Mc {
            samples,
            seed,
            stream_id,
        } => {
            if samples < 2 {
                return Err(Error::InvalidConfig("J_f Monte Carlo needs >= 2 samples".into()));
            }
            let (su, sv) = (u.sqrt(), v.sqrt());
            let mut rng = RngStream::new(seed, stream_id).rng();
            let mut stats = StreamingStats::default();
            let mut x = vec![0.0; spec.d];
            for _ in 0..samples {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = diff[i] + su * normal(&mut rng) - sv * normal(&mut rng);
                }
                stats.push(spec.eval(&x)?);
            }
            Ok(stats.estimate())
        }
    }
}

/// Fast evaluator of `x -> (p_eps * f)(x)` for path functionals.
///
/// The heat kernel is evaluated in closed form. Other families are
/// tabulated on a uniform radial grid over `[0, r_max]` and interpolated with
/// four-point Lagrange polynomials; radii beyond the table fall back to
/// direct quadrature.
#[derive(Debug, Clone)]
pub struct MollifiedEvaluator {
    spec: KernelSpec,
    eps: f64,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Heat { var: f64, norm: f64 },
    Table { h: f64, r_max: f64, values: Vec<f64> },
}

/// Radial grid size of [`MollifiedEvaluator`] tables.
pub const TABLE_POINTS: usize = 4096;

impl MollifiedEvaluator {
    pub fn new(spec: KernelSpec, eps: f64, r_max: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("mollification scale must be > 0, got {eps}")));
        }
        let inner = if spec.family == KernelFamily::Heat {
            let var = spec.alpha + eps;
            Inner::Heat {
                var,
                norm: (2.0 * PI * var).powf(-0.5 * spec.d as f64),
            }
        } else {
            let r_max = r_max.max(8.0 * eps.sqrt());
            let h = r_max / (TABLE_POINTS - 1) as f64;
            let values = (0..TABLE_POINTS + 2)
                .map(|i| {
                    let r = i as f64 * h;
                    spec.mollified_sq(eps, r * r)
                })
                .collect::<Result<Vec<_>>>()?;
            Inner::Table { h, r_max, values }
        };
        Ok(Self { spec, eps, inner })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Value at squared radius `r2`.
    pub fn eval_sq(&self, r2: f64) -> Result<f64> {
        match &self.inner {
            Inner::Heat { var, norm } => Ok(norm * (-0.5 * r2 / var).exp()),
            Inner::Table { h, r_max, values } => {
                let r = r2.sqrt();
                if r >= *r_max {
                    return self.spec.mollified_sq(self.eps, r2);
                }
                let s = r / h;
                let k = s as usize;
                let u = s - k as f64;
                // The function is even in r, so reflect below the origin.
                let at = |i: isize| values[i.unsigned_abs()];
                let k = k as isize;
                let (f0, f1, f2, f3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
                let v = -u * (u - 1.0) * (u - 2.0) / 6.0 * f0 + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * f1
                    - (u + 1.0) * u * (u - 2.0) / 2.0 * f2
                    + (u + 1.0) * u * (u - 1.0) / 6.0 * f3;
                Ok(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(f: KernelFamily, a: f64, d: usize) -> KernelSpec {
        KernelSpec::new(f, a, d).unwrap()
    }

    #[test]
    fn frozen_kernel_values() {
        let r = k(KernelFamily::Riesz, 1.0, 2).eval(&[1.0, 0.0]).unwrap();
        assert!((r - 1.0 / (2.0 * PI)).abs() < 1e-12);
        let h = k(KernelFamily::Heat, 1.0, 2).eval(&[0.0, 0.0]).unwrap();
        assert!((h - 1.0 / (2.0 * PI)).abs() < 1e-12);
        let p = k(KernelFamily::Poisson, 1.0, 1).eval(&[0.0]).unwrap();
        assert!((p - 1.0 / PI).abs() < 1e-12);
        let g = k(KernelFamily::Bessel, 2.0, 2).spectral_density(&[1.0, 0.0]).unwrap();
        assert!((g - 0.5).abs() < 1e-14);
        let g0 = k(KernelFamily::Heat, 1.0, 3).spectral_density(&[0.0; 3]).unwrap();
        assert_eq!(g0, 1.0);
    }

    #[test]
    fn singular_and_invalid_inputs() {
        assert!(KernelSpec::new(KernelFamily::Riesz, 2.0, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::Heat, 0.0, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::Heat, 1.0, 0).is_err());
        let r = k(KernelFamily::Riesz, 1.0, 2);
        assert!(matches!(r.eval(&[0.0, 0.0]), Err(Error::SingularPoint(_))));
        let b = k(KernelFamily::Bessel, 1.0, 2);
        assert!(matches!(b.eval(&[0.0, 0.0]), Err(Error::SingularPoint(_))));
        assert!(r.eval(&[1.0]).is_err());
    }

    #[test]
    fn frozen_mollified_heat_and_monotonicity() {
        let h = k(KernelFamily::Heat, 1.0, 1);
        let v = h.mollified(1.0, &[0.0]).unwrap();
        assert!((v - 0.282_094_8).abs() < 1e-7);
        for spec in [h, k(KernelFamily::Riesz, 1.0, 2), k(KernelFamily::Poisson, 1.0, 1), k(KernelFamily::Bessel, 1.0, 2)] {
            let x = vec![0.0; spec.d];
            let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&e| spec.mollified(e, &x).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "{spec:?} {vals:?}");
        }
    }

    #[test]
    fn mixtures_reproduce_closed_forms() {
        // Poisson and Riesz closed forms against their mixing integrals.
        for (spec, r2) in [
            (k(KernelFamily::Poisson, 0.7, 1), 0.3),
            (k(KernelFamily::Poisson, 1.3, 3), 2.0),
            (k(KernelFamily::Riesz, 1.0, 2), 0.5),
            (k(KernelFamily::Riesz, 2.5, 3), 4.0),
        ] {
            let d = spec.d;
            let via_mix = spec.mix(0.0, |v| heat_density(v, r2, d)).unwrap();
            let closed = spec.eval_sq(r2).unwrap();
            assert!((via_mix - closed).abs() < 1e-9 * closed, "{spec:?}: {via_mix} vs {closed}");
        }
        // Riesz centered mollification agrees with the mixing integral.
        let r = k(KernelFamily::Riesz, 1.0, 2);
        let a = r.mollified_sq(0.3, 0.0).unwrap();
        let b = r.mix(0.0, |v| heat_density(v + 0.3, 0.0, 2)).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn bessel_matches_modified_bessel_k() {
        // d = 1, alpha = 2: f(x) = e^{-|x|} / 2.
        let b = k(KernelFamily::Bessel, 2.0, 1);
        for x in [0.1, 0.7, 2.0, 6.0] {
            let v = b.eval(&[x]).unwrap();
            assert!((v - 0.5 * (-x).exp()).abs() < 1e-10, "{x}: {v}");
        }
        // d = 3, alpha = 2: f(x) = e^{-|x|} / (4 pi |x|).
        let b = k(KernelFamily::Bessel, 2.0, 3);
        let v = b.eval(&[0.5, 0.0, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp() / (4.0 * PI * 0.5)).abs() < 1e-10);
    }

    #[test]
    fn frozen_jf_and_bounds() {
        let h = k(KernelFamily::Heat, 1.0, 1);
        let v = j_f(&h, 0.5, 0.5, &[0.0], &[0.0], JfMethod::Closed).unwrap().value;
        // (p_1 * p_1)(0) = p_2(0).
        assert!((v - 0.282_094_8).abs() < 1e-7);
        let r = k(KernelFamily::Riesz, 1.0, 2);
        let v = j_f(&r, 0.5, 0.5, &[0.3, 0.1], &[0.3, 0.1], JfMethod::Closed).unwrap().value;
        assert!((v - 0.199_471_1).abs() < 1e-7);
        match r.bound_constants().unwrap() {
            BoundConstants::Rough { d_const } => assert!((d_const - 0.199_471_1).abs() < 1e-7),
            other => panic!("{other:?}"),
        }
        match k(KernelFamily::Poisson, 2.0, 1).bound_constants().unwrap() {
            BoundConstants::Smooth { c } => assert!((c - 0.159_154_9).abs() < 1e-7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_interpolates_accurately() {
        for spec in [k(KernelFamily::Riesz, 1.0, 2), k(KernelFamily::Poisson, 1.0, 1), k(KernelFamily::Bessel, 1.5, 3)] {
            let ev = MollifiedEvaluator::new(spec, 0.1, 6.0).unwrap();
            for r in [0.0, 0.013, 0.2, 0.77, 1.9, 5.5, 7.0] {
                let exact = spec.mollified_sq(0.1, r * r).unwrap();
                let approx = ev.eval_sq(r * r).unwrap();
                assert!((exact - approx).abs() < 1e-8 * exact, "{spec:?} r={r}");
            }
        }
    }
}
