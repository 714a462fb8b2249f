//! One-dimensional adaptive quadrature and fixed Gauss rules.
//!
//! The adaptive scheme is a 10/21-point Gauss-Kronrod pair with global
//! bisection of the worst interval. Integrals over `(0, inf)` go through a
//! logarithmic substitution, which turns the algebraic end behaviour of the
//! kernel mixtures into exponential decay.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// Tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    let (k, g) = (k * h, g * h);
    if !k.is_finite() {
        return Err(Error::Numerical(format!(
            "integrand not finite on [{a:e}, {b:e}]"
        )));
    }
    Ok(Segment {
        a,
        b,
        value: k,
        error: (k - g).abs(),
    })
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    integrate_breaks(&mut f, &[a, b], opts)
}

/// Adaptive integration over consecutive intervals `points[i]..points[i+1]`.
///
/// Breakpoints should sit on kinks and singularities of the integrand.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod21(&mut f, w[0], w[1])?);
            evaluations += 21;
        }
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure {
                estimate: value,
                error,
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => {
                return Ok(QuadResult {
                    value: 0.0,
                    error: 0.0,
                    evaluations,
                })
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::QuadratureFailure {
                estimate: value,
                error,
            });
        }
        heap.push(kronrod21(&mut f, worst.a, mid)?);
        heap.push(kronrod21(&mut f, mid, worst.b)?);
        evaluations += 42;
    }
}

/// Integral of a non-negative, unimodal-ish `f` over `(0, inf)`.
///
/// Substitutes `w = e^y` and truncates the `y` range where the transformed
/// integrand has dropped 40 orders of magnitude below its largest sampled
/// value. `log_center` is a hint for where the mass sits on the log scale.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    log_center: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    const LIMIT: f64 = 700.0;
    const DROP: f64 = 1e-40;
    let mut g = |y: f64| {
        let w = y.exp();
        let v = f(w) * w;
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };
    let c = log_center.clamp(-LIMIT + 1.0, LIMIT - 1.0);
    let gc = g(c);
    if gc.is_nan() {
        return Err(Error::Numerical("integrand not finite".into()));
    }
    let mut peak = gc.abs();
    let mut scan = |dir: f64, peak: &mut f64| -> Result<f64> {
        let mut y = c;
        let mut quiet = 0;
        let mut step = 0.5;
        loop {
            y += dir * step;
            if y.abs() >= LIMIT {
                return Ok(dir * LIMIT);
            }
            let v = g(y);
            if v.is_nan() {
                return Err(Error::Numerical(format!("integrand not finite at log-scale {y}")));
            }
            let v = v.abs();
            *peak = peak.max(v);
            if v <= DROP * *peak {
                quiet += 1;
                if quiet >= 2 {
                    return Ok(y);
                }
            } else {
                quiet = 0;
            }
            step = (step * 1.25).min(4.0);
        }
    };
    let hi = scan(1.0, &mut peak)?;
    let lo = scan(-1.0, &mut peak)?;
    // Breakpoints every few units keep the first pass informative.
    let n = ((hi - lo) / 4.0).ceil().max(1.0) as usize;
    let pts: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    let opts = QuadOptions {
        max_intervals: opts.max_intervals.max(4 * n),
        ..opts
    };
    integrate_breaks(g, &pts, opts)
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.max(2)).expect("degree >= 2");
    rule.into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Probabilists' Gauss-Hermite rule: `sum w_i g(x_i) ~ E[g(Z)]`, `Z ~ N(0,1)`.
pub fn gauss_hermite_normal(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(n.max(2)).expect("degree >= 2");
    let s = std::f64::consts::PI.sqrt();
    rule.into_iter()
        .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / s))
        .collect()
}
