//! Reproducible Monte Carlo plumbing.
//!
//! Every random draw is addressed by `(seed, stream_id, position)`: a stream
//! is a ChaCha8 generator whose 64-bit stream selector is the stream id, so
//! sample `i` of an experiment always sees the same numbers no matter which
//! thread runs it. Reductions split the sample range into fixed-size leaves
//! and merge the leaf statistics along a fixed binary tree, which makes the
//! result bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SHE_MFC_WORKERS";

/// Samples per reduction leaf. Part of the reproducibility contract.
pub const LEAF_SIZE: u64 = 64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Address of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream for sub-task `index` of this stream.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// Generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Generator positioned at 32-bit word `pos` of the stream.
    pub fn rng_at(&self, pos: u128) -> ChaCha8Rng {
        let mut r = self.rng();
        r.set_word_pos(pos);
        r
    }
}

/// Standard normal draw.
pub fn normal<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `k` independent `d`-dimensional Brownian paths on a uniform grid of
/// `[0, t]` with `n_steps` steps. Paths start at the origin.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub k: usize,
    pub n_steps: usize,
    pub d: usize,
    pub t: f64,
    values: Vec<f64>,
}

impl PathBundle {
    /// Bundle with explicit values laid out as `[path][step][coord]`.
    pub fn from_values(k: usize, n_steps: usize, d: usize, t: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * (n_steps + 1) * d {
            return Err(Error::InvalidConfig(format!(
                "path bundle needs {} values, got {}",
                k * (n_steps + 1) * d,
                values.len()
            )));
        }
        Ok(Self {
            k,
            n_steps,
            d,
            t,
            values,
        })
    }

    /// Bundle whose paths all stay at the origin.
    pub fn zeros(k: usize, n_steps: usize, d: usize, t: f64) -> Self {
        Self {
            k,
            n_steps,
            d,
            t,
            values: vec![0.0; k * (n_steps + 1) * d],
        }
    }

    pub fn dt(&self) -> f64 {
        self.t / self.n_steps as f64
    }

    /// Position of path `j` at grid index `i`.
    pub fn at(&self, j: usize, i: usize) -> &[f64] {
        let o = (j * (self.n_steps + 1) + i) * self.d;
        &self.values[o..o + self.d]
    }

    /// Linear interpolation of path `j` at the cell midpoints, laid out as
    /// `[cell][coord]`.
    pub fn midpoints(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_steps * self.d);
        for i in 0..self.n_steps {
            let (a, b) = (self.at(j, i), self.at(j, i + 1));
            out.extend(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)));
        }
        out
    }
}

/// Draw a path bundle from `stream`.
pub fn sample_bundle(stream: RngStream, k: usize, n_steps: usize, t: f64, d: usize) -> Result<PathBundle> {
    if k == 0 || n_steps == 0 || d == 0 {
        return Err(Error::InvalidConfig(
            "path bundle needs k, n_steps, d >= 1".into(),
        ));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("horizon must be > 0, got {t}")));
    }
    let sd = (t / n_steps as f64).sqrt();
    let mut rng = stream.rng();
    let mut values = Vec::with_capacity(k * (n_steps + 1) * d);
    for _ in 0..k {
        let start = values.len();
        values.extend(std::iter::repeat_n(0.0, d));
        for i in 0..n_steps {
            for c in 0..d {
                let prev = values[start + i * d + c];
                values.push(prev + sd * normal(&mut rng));
            }
        }
    }
    PathBundle::from_values(k, n_steps, d, t, values)
}

/// Streaming count, mean, sum of squared deviations, min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamingStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for StreamingStats {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl StreamingStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Combine two summaries (Chan et al. pairwise update).
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n as f64;
        Self {
            count: n,
            mean,
            m2,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.std_error(), self.count)
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub n_samples: u64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64, n_samples: u64) -> Self {
        Self {
            value,
            std_error,
            ci95: [value - 1.96 * std_error, value + 1.96 * std_error],
            n_samples,
        }
    }

    /// Deterministic value; the standard error is zero.
    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0)
    }

    /// `c * self`.
    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.value, c.abs() * self.std_error, self.n_samples)
    }
}

/// Worker count from `SHE_MFC_WORKERS`, falling back to the core count.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_in_pool<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> Result<T> {
    if workers == 0 {
        return Err(Error::InvalidConfig("workers must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn tree_merge(mut level: Vec<Vec<StreamingStats>>, width: usize) -> Vec<StreamingStats> {
    if level.is_empty() {
        return vec![StreamingStats::default(); width];
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    level.pop().unwrap_or_default()
}

/// Evaluate `eval(i, out)` for `i in 0..n` and summarise each of the `width`
/// output slots.
///
/// The evaluator must derive all randomness from `i`. On failure the error
/// of the lowest failing index is returned.
pub fn parallel_reduce_multi<F>(n: u64, width: usize, workers: usize, eval: F) -> Result<Vec<StreamingStats>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    let leaves = n.div_ceil(LEAF_SIZE);
    let leaf_stats: Vec<Result<Vec<StreamingStats>>> = run_in_pool(workers, || {
        (0..leaves)
            .into_par_iter()
            .map(|leaf| {
                let mut stats = vec![StreamingStats::default(); width];
                let mut buf = vec![0.0; width];
                let lo = leaf * LEAF_SIZE;
                for i in lo..(lo + LEAF_SIZE).min(n) {
                    eval(i, &mut buf).map_err(|e| wrap_failure(i, e))?;
                    for (s, &x) in stats.iter_mut().zip(&buf) {
                        s.push(x);
                    }
                }
                Ok(stats)
            })
            .collect()
    })?;
    let level = leaf_stats.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(tree_merge(level, width))
}

/// Scalar form of [`parallel_reduce_multi`].
pub fn parallel_reduce<F>(n: u64, workers: usize, eval: F) -> Result<StreamingStats>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let v = parallel_reduce_multi(n, 1, workers, |i, out| {
        out[0] = eval(i)?;
        Ok(())
    })?;
    Ok(v[0])
}

/// Evaluate `eval(i)` for `i in 0..n` and return the results in index order.
pub fn parallel_map<T, F>(n: u64, workers: usize, eval: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    run_in_pool(workers, || {
        (0..n)
            .into_par_iter()
            .map(|i| eval(i).map_err(|e| wrap_failure(i, e)))
            .collect::<Result<Vec<T>>>()
    })?
}

/// Summaries of the columns of `rows`, merged with the same fixed tree as
/// [`parallel_reduce_multi`].
pub fn summarize_rows(rows: &[Vec<f64>], width: usize) -> Vec<StreamingStats> {
    let level: Vec<Vec<StreamingStats>> = rows
        .chunks(LEAF_SIZE as usize)
        .map(|chunk| {
            let mut stats = vec![StreamingStats::default(); width];
            for row in chunk {
                for (s, &x) in stats.iter_mut().zip(row) {
                    s.push(x);
                }
            }
            stats
        })
        .collect();
    tree_merge(level, width)
}

fn wrap_failure(index: u64, e: Error) -> Error {
    match e {
        Error::WorkerFailure { .. } => e,
        e if e.is_validation() => e,
        e => Error::WorkerFailure {
            index,
            message: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_addressable() {
        use rand::RngCore;
        let s = RngStream::new(7, 3);
        let a: Vec<u32> = {
            let mut r = s.rng();
            (0..10).map(|_| r.next_u32()).collect()
        };
        let mut r = s.rng_at(4);
        assert_eq!(r.next_u32(), a[4]);
        assert_ne!(s.child(0), s.child(1));
        assert_eq!(s.child(5), RngStream::new(7, 3).child(5));
    }

    #[test]
    fn frozen_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 3.0 + 1.0).collect();
        let mut one = StreamingStats::default();
        xs.iter().for_each(|&x| one.push(x));
        let merged = xs
            .chunks(625)
            .map(|c| {
                let mut s = StreamingStats::default();
                c.iter().for_each(|&x| s.push(x));
                s
            })
            .fold(StreamingStats::default(), |a, b| a.merge(&b));
        assert_eq!(merged.count, one.count);
        assert!((merged.mean - one.mean).abs() < 1e-12);
        assert!((merged.variance() - one.variance()).abs() < 1e-12);
        assert_eq!(merged.min, one.min);
        assert_eq!(merged.max, one.max);
    }

    #[test]
    fn frozen_worker_count_invariance() {
        let f = |i: u64| {
            let mut r = RngStream::new(11, 0).child(i).rng();
            Ok(normal(&mut r).exp())
        };
        let a = parallel_reduce(5000, 1, f).unwrap();
        let b = parallel_reduce(5000, 8, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lowest_failing_index_is_reported() {
        let r = parallel_reduce(1000, 4, |i| {
            if i == 300 || i == 700 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(1.0)
            }
        });
        match r {
            Err(Error::WorkerFailure { index, .. }) => assert_eq!(index, 300),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bundle_increments_have_right_variance() {
        let b = sample_bundle(RngStream::new(1, 2), 2, 1000, 2.0, 1).unwrap();
        let dt = b.dt();
        let mut s = StreamingStats::default();
        for j in 0..2 {
            for i in 0..1000 {
                s.push((b.at(j, i + 1)[0] - b.at(j, i)[0]) / dt.sqrt());
            }
        }
        assert!(s.mean.abs() < 0.1);
        assert!((s.variance() - 1.0).abs() < 0.1);
        assert_eq!(b.at(1, 0), &[0.0]);
    }
}
