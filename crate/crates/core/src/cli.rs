//! Command-line front end.
//!
//! Every subcommand resolves a configuration record from an optional JSON
//! file (`--config`) overlaid with explicit flags, runs the corresponding
//! library operation and writes a JSON report or a CSV table. Both carry a
//! metadata block echoing the resolved configuration, so any emitted file
//! can be passed back through `--config` to reproduce it.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::chaos::{
    alpha_n_bound, alpha_n_eps, psi_n, second_moment_series, sigma_matrix, AlphaMethod, NoiseModel, PsiMethod,
    SeriesConfig,
};
use crate::error::{Error, Result};
use crate::fk_moments::{compare_with_chaos, fk_moment, fk_moment_extrapolated, FkConfig, InitialCondition};
use crate::kernels::{j_f, BoundConstants, JfMethod, KernelFamily, KernelSpec};
use crate::localtime::{
    convergence_study, exp_moment, exp_moment_bound, local_time_moments_multi, LocalTimeConfig, WeightSpec,
};
use crate::mc_engine::default_workers;
use crate::regime::existence_report;

/// Version of the emitted document layout.
pub const SCHEMA_VERSION: u32 = 1;
const TOOL: &str = "she-mfc";

#[derive(Parser, Debug)]
#[command(name = "she-mfc", version, about = "Moments and local times of the heat equation with fractional-colored noise")]
struct Cli {
    /// JSON configuration file, or a previously emitted JSON/CSV output. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output format; inferred from the output extension, else per command.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = crate::mc_engine::WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Declares a flag record (`Option` fields, used for clap and for the
/// config file) and the resolved record, with per-field defaults. Fields
/// without a default are required.
macro_rules! command_config {
    ($args:ident => $cfg:ident { $( $(#[$attr:meta])* $field:ident : $ty:ty $(= $default:expr)? ),* $(,)? }) => {
        #[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $args {
            $(
                $(#[$attr])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        #[derive(Debug, Clone, Serialize)]
        pub struct $cfg {
            $( pub $field: $ty, )*
        }

        impl $args {
            fn resolve(self) -> Result<$cfg> {
                Ok($cfg {
                    $( $field: match self.$field {
                        Some(v) => v,
                        None => command_config!(@default $field $(, $default)?),
                    }, )*
                })
            }
        }
    };
    (@default $field:ident) => {
        return Err(Error::InvalidConfig(format!("missing required parameter `{}`", stringify!($field))))
    };
    (@default $field:ident, $default:expr) => {
        $default
    };
}

command_config!(KernelEvalArgs => KernelEvalCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long)] r_min: f64 = 0.1,
    #[arg(long)] r_max: f64 = 2.0,
    #[arg(long)] points: usize = 20,
    /// Also tabulate `p_eps * f`.
    #[arg(long)] eps: Option<f64> = None,
    #[arg(long)] seed: u64 = 1,
});

command_config!(JfArgs => JfCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long)] u: f64,
    #[arg(long)] v: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)] y: Vec<f64> = Vec::new(),
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)] z: Vec<f64> = Vec::new(),
    /// Monte Carlo sample count; zero selects the deterministic evaluation.
    #[arg(long)] samples: u64 = 0,
    #[arg(long)] seed: u64 = 1,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PsiChoice {
    Deterministic,
    SpectralMc,
    MixingMc,
}

command_config!(PsiArgs => PsiCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long, value_delimiter = ',')] s: Vec<f64>,
    #[arg(long, value_delimiter = ',')] t: Vec<f64>,
    #[arg(long)] eps: f64 = 0.0,
    #[arg(long, value_enum)] method: PsiChoice = PsiChoice::Deterministic,
    #[arg(long)] samples: u64 = 100_000,
    #[arg(long)] seed: u64 = 1,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaChoice {
    /// Quadrature for `n <= 2`, Monte Carlo above.
    Auto,
    Quadrature,
    Mc,
}

command_config!(AlphaArgs => AlphaCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] n: usize,
    #[arg(long)] eps: f64 = 0.0,
    #[arg(long, value_enum)] method: AlphaChoice = AlphaChoice::Auto,
    #[arg(long)] nodes: usize = 16,
    #[arg(long)] samples: u64 = 20_000,
    #[arg(long)] inner_samples: u64 = 4,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] c_star: f64 = 1.0,
    #[arg(long)] seed: u64 = 1,
});

command_config!(SecondMomentArgs => SecondMomentCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] tail_tol: f64 = 1e-4,
    #[arg(long)] max_order: usize = 12,
    #[arg(long)] nodes: usize = 16,
    #[arg(long)] mc_samples: u64 = 20_000,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] c_star: f64 = 1.0,
    #[arg(long)] seed: u64 = 1,
});

command_config!(LocalTimeArgs => LocalTimeCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] eps: f64 = 0.1,
    #[arg(long, value_delimiter = ',')] orders: Vec<usize> = vec![1, 2],
    /// Use the mollified weight with this window instead of the noise weight.
    #[arg(long)] delta: Option<f64> = None,
    #[arg(long)] n_steps: usize = 256,
    #[arg(long)] n_paths: u64 = 20_000,
    #[arg(long)] seed: u64 = 1,
});

command_config!(ExpMomentArgs => ExpMomentCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] eps: f64 = 0.1,
    #[arg(long)] lambda: f64,
    #[arg(long)] delta: Option<f64> = None,
    #[arg(long)] n_steps: usize = 256,
    #[arg(long)] n_paths: u64 = 20_000,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] c_star: f64 = 1.0,
    #[arg(long)] seed: u64 = 1,
});

command_config!(ConvergenceArgs => ConvergenceCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long, value_delimiter = ',')] eps_list: Vec<f64> = vec![0.4, 0.2, 0.1, 0.05],
    #[arg(long)] delta: Option<f64> = None,
    #[arg(long)] n_steps: usize = 256,
    #[arg(long)] n_paths: u64 = 20_000,
    #[arg(long)] seed: u64 = 1,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitialChoice {
    Constant,
    Cosine,
    GaussianBump,
}

command_config!(FkArgs => FkCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] k: usize = 2,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)] x: Vec<f64> = Vec::new(),
    #[arg(long)] eps: f64 = 0.1,
    /// Richardson step over eps, eps/2, eps/4.
    #[arg(long)] extrapolate: bool = false,
    #[arg(long, value_enum)] u0: InitialChoice = InitialChoice::Constant,
    #[arg(long)] u0_amplitude: f64 = 1.0,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)] u0_omega: Vec<f64> = Vec::new(),
    #[arg(long)] u0_width: f64 = 1.0,
    #[arg(long)] n_steps: usize = 256,
    #[arg(long)] n_samples: u64 = 20_000,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] seed: u64 = 1,
});

command_config!(CompareArgs => CompareCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long)] t: f64,
    #[arg(long)] tail_tol: f64 = 1e-4,
    #[arg(long)] eps: f64 = 0.04,
    #[arg(long)] n_steps: usize = 256,
    #[arg(long)] n_samples: u64 = 20_000,
    #[arg(long)] mc_samples: u64 = 20_000,
    #[arg(long)] nodes: usize = 16,
    #[arg(long)] max_order: usize = 12,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] c_star: f64 = 1.0,
    #[arg(long)] seed: u64 = 1,
});

command_config!(RegimeArgs => RegimeCfg {
    #[arg(long)] kernel: KernelFamily,
    #[arg(long)] alpha: f64,
    #[arg(long)] d: usize,
    #[arg(long = "H")] hurst: f64,
    #[arg(long = "K")] max_k: usize = 5,
    #[arg(long)] beta_h: Option<f64> = None,
    #[arg(long)] c_star: f64 = 1.0,
    #[arg(long)] seed: u64 = 1,
});

command_config!(SelftestArgs => SelftestCfg {
    #[arg(long)] seed: u64 = 1,
});

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate f, its spectral density and optionally p_eps * f along a ray.
    KernelEval(KernelEvalArgs),
    /// J_f(u, v, y, z) with its uniform bound.
    Jf(JfArgs),
    /// psi^(n)(s, t) of a kernel.
    Psi(PsiArgs),
    /// Chaos coefficient alpha_n(t) (or alpha_{n,eps}) with its bound.
    Alpha(AlphaArgs),
    /// Truncated chaos series for E|u(t,x)|^2 with u0 = 1.
    SecondMoment(SecondMomentArgs),
    /// Moments of the regularised intersection local time.
    LocaltimeMoments(LocalTimeArgs),
    /// E exp(lambda L_{t,eps}) with its bound.
    ExpMoment(ExpMomentArgs),
    /// Local-time moments along a decreasing eps list on common paths.
    Convergence(ConvergenceArgs),
    /// Feynman-Kac estimate of E[u(t,x)^k].
    FkMoment(FkArgs),
    /// Second moment by the Feynman-Kac and chaos routes.
    Compare(CompareArgs),
    /// Existence regime and critical times.
    Regime(RegimeArgs),
    /// Fast invariant suite.
    Selftest(SelftestArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::KernelEval(_) => "kernel-eval",
            Self::Jf(_) => "jf",
            Self::Psi(_) => "psi",
            Self::Alpha(_) => "alpha",
            Self::SecondMoment(_) => "second-moment",
            Self::LocaltimeMoments(_) => "localtime-moments",
            Self::ExpMoment(_) => "exp-moment",
            Self::Convergence(_) => "convergence",
            Self::FkMoment(_) => "fk-moment",
            Self::Compare(_) => "compare",
            Self::Regime(_) => "regime",
            Self::Selftest(_) => "selftest",
        }
    }
}

/// Tabular result for CSV emission.
struct Table {
    headers: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

struct Report {
    config: Value,
    constants: Value,
    result: Value,
    table: Option<Table>,
    /// Numerical failure signalled alongside a (partial) result.
    failure: Option<Error>,
}

/// Finite numbers as JSON numbers, others as `"inf"`, `"-inf"`, `"nan"`.
fn ext(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Numerical(format!("serialization failed: {e}")))
}

fn kernel_constants(spec: &KernelSpec) -> Value {
    match spec.bound_constants() {
        Ok(BoundConstants::Smooth { c }) => json!({ "C": ext(c) }),
        Ok(BoundConstants::Rough { d_const }) => json!({ "D": ext(d_const) }),
        Err(_) => json!({}),
    }
}

fn model_constants(m: &NoiseModel) -> Value {
    let mut v = kernel_constants(&m.kernel);
    let obj = v.as_object_mut().expect("object");
    obj.insert("alpha_H".into(), ext(m.alpha_h()));
    if let Ok(b) = m.beta_h() {
        obj.insert("beta_H".into(), ext(b));
    }
    obj.insert("C_star".into(), ext(m.c_star));
    v
}

fn make_model(kernel: KernelFamily, alpha: f64, d: usize, hurst: f64, beta_h: Option<f64>, c_star: f64) -> Result<NoiseModel> {
    let m = NoiseModel {
        kernel: KernelSpec::new(kernel, alpha, d)?,
        hurst,
        beta_override: beta_h,
        c_star,
    };
    m.validate()?;
    Ok(m)
}

fn weight_for(m: &NoiseModel, delta: Option<f64>, t: f64) -> WeightSpec {
    match delta {
        Some(delta) => WeightSpec::Mollified {
            hurst: m.hurst,
            delta,
            horizon: t,
        },
        None => WeightSpec::for_model(m),
    }
}

fn est_row(e: &crate::mc_engine::Estimate) -> [Value; 2] {
    [ext(e.value), ext(e.std_error)]
}

fn run_command(cmd: Command, file: Option<Value>, workers: usize) -> Result<Report> {
    fn merge<A: Serialize + for<'de> Deserialize<'de>>(file: Option<Value>, flags: &A) -> Result<A> {
        let mut base = match file {
            Some(Value::Object(m)) => m,
            Some(_) => return Err(Error::InvalidConfig("config must be a JSON object".into())),
            None => Map::new(),
        };
        if let Value::Object(over) = to_value(flags)? {
            base.extend(over);
        }
        serde_json::from_value(Value::Object(base)).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
    let w = Some(workers);
    match cmd {
        Command::KernelEval(a) => {
            let c = merge(file, &a)?.resolve()?;
            let spec = KernelSpec::new(c.kernel, c.alpha, c.d)?;
            if c.points < 1 || !(c.r_max >= c.r_min) || !(c.r_min >= 0.0) {
                return Err(Error::InvalidConfig("need points >= 1 and 0 <= r_min <= r_max".into()));
            }
            let mut rows = Vec::with_capacity(c.points);
            let mut out = Vec::with_capacity(c.points);
            for i in 0..c.points {
                let r = if c.points == 1 {
                    c.r_min
                } else {
                    c.r_min + (c.r_max - c.r_min) * i as f64 / (c.points - 1) as f64
                };
                let f = spec.eval_sq(r * r)?;
                let g = spec.spectral_density_sq(r * r)?;
                let m = c.eps.map(|e| spec.mollified_sq(e, r * r)).transpose()?;
                rows.push(vec![ext(r), ext(f), ext(g), m.map_or(Value::Null, ext)]);
                out.push(json!({ "r": ext(r), "f": ext(f), "g": ext(g), "mollified": m.map(ext) }));
            }
            Ok(Report {
                constants: kernel_constants(&spec),
                config: to_value(&c)?,
                result: json!({ "rows": out }),
                table: Some(Table {
                    headers: vec!["r", "f", "g", "mollified"],
                    rows,
                }),
                failure: None,
            })
        }
        Command::Jf(a) => {
            let c = merge(file, &a)?.resolve()?;
            let spec = KernelSpec::new(c.kernel, c.alpha, c.d)?;
            let pad = |v: &Vec<f64>| if v.is_empty() { vec![0.0; c.d] } else { v.clone() };
            let (y, z) = (pad(&c.y), pad(&c.z));
            let method = if c.samples == 0 {
                JfMethod::Closed
            } else {
                JfMethod::Mc {
                    samples: c.samples,
                    seed: c.seed,
                    stream_id: 0,
                }
            };
            let est = j_f(&spec, c.u, c.v, &y, &z, method)?;
            let bound = match spec.bound_constants() {
                Ok(BoundConstants::Smooth { c }) => Some(c),
                Ok(BoundConstants::Rough { d_const }) => Some(d_const * (c.u + c.v).powf(-0.5 * (c.d as f64 - c.alpha))),
                Err(_) => None,
            };
            Ok(Report {
                constants: kernel_constants(&spec),
                config: to_value(&c)?,
                result: json!({ "estimate": to_value(&est)?, "bound": bound.map(ext) }),
                table: None,
                failure: None,
            })
        }
        Command::Psi(a) => {
            let c = merge(file, &a)?.resolve()?;
            let spec = KernelSpec::new(c.kernel, c.alpha, c.d)?;
            let method = match c.method {
                PsiChoice::Deterministic => PsiMethod::Deterministic,
                PsiChoice::SpectralMc => PsiMethod::SpectralMc {
                    samples: c.samples,
                    seed: c.seed,
                    stream_id: 0,
                },
                PsiChoice::MixingMc => PsiMethod::MixingMc {
                    samples: c.samples,
                    seed: c.seed,
                    stream_id: 0,
                },
            };
            let sigma = sigma_matrix(&c.s, &c.t)?;
            let est = psi_n(&spec, &c.s, &c.t, c.eps, method)?;
            let n = sigma.nrows();
            let rows: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|k| sigma[(j, k)]).collect()).collect();
            Ok(Report {
                constants: kernel_constants(&spec),
                config: to_value(&c)?,
                result: json!({ "sigma": rows, "estimate": to_value(&est)? }),
                table: None,
                failure: None,
            })
        }
        Command::Alpha(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, c.c_star)?;
            let quad = match c.method {
                AlphaChoice::Auto => c.n <= 2,
                AlphaChoice::Quadrature => true,
                AlphaChoice::Mc => false,
            };
            let method = if quad {
                AlphaMethod::Quadrature { nodes: c.nodes }
            } else {
                AlphaMethod::Mc {
                    samples: c.samples,
                    seed: c.seed,
                    stream_id: 0,
                    inner_samples: c.inner_samples,
                    workers: w,
                }
            };
            let est = alpha_n_eps(&m, c.n, c.t, c.eps, method)?;
            let bound = alpha_n_bound(&m, c.n, c.t).ok();
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: json!({
                    "alpha_n": to_value(&est)?,
                    "method": if quad { "quadrature" } else { "mc" },
                    "bound": bound.map(ext),
                }),
                table: None,
                failure: None,
            })
        }
        Command::SecondMoment(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, c.c_star)?;
            let cfg = SeriesConfig {
                tail_tol: c.tail_tol,
                max_order: c.max_order,
                quadrature_nodes: c.nodes,
                mc_samples: c.mc_samples,
                seed: c.seed,
                workers: w,
            };
            let (result, failure) = match second_moment_series(&m, c.t, &cfg) {
                Ok(r) => (to_value(&r)?, None),
                Err(e @ Error::NoConvergence { .. }) => (Value::Null, Some(e)),
                Err(e) => return Err(e),
            };
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result,
                table: None,
                failure,
            })
        }
        Command::LocaltimeMoments(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, None, 1.0)?;
            let cfg = LocalTimeConfig {
                workers: w,
                ..LocalTimeConfig::new(c.t, c.n_steps, c.n_paths, c.seed)
            };
            let wt = weight_for(&m, c.delta, c.t);
            let est = local_time_moments_multi(&m, &wt, c.eps, &c.orders, &cfg)?;
            let rows: Vec<Vec<Value>> = c
                .orders
                .iter()
                .zip(&est)
                .map(|(&n, e)| {
                    let [v, se] = est_row(e);
                    vec![json!(n), v, se]
                })
                .collect();
            let out: Vec<Value> = c
                .orders
                .iter()
                .zip(&est)
                .map(|(&n, e)| Ok(json!({ "n": n, "moment": to_value(e)? })))
                .collect::<Result<_>>()?;
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: json!({ "weight": to_value(&wt)?, "moments": out }),
                table: Some(Table {
                    headers: vec!["n", "moment", "std_error"],
                    rows,
                }),
                failure: None,
            })
        }
        Command::ExpMoment(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, c.c_star)?;
            let cfg = LocalTimeConfig {
                workers: w,
                ..LocalTimeConfig::new(c.t, c.n_steps, c.n_paths, c.seed)
            };
            let wt = weight_for(&m, c.delta, c.t);
            let e = exp_moment(&m, &wt, c.eps, c.lambda, &cfg)?;
            if let Some(msg) = &e.warning {
                eprintln!("warning: {msg}");
            }
            let bound = exp_moment_bound(&m, &wt, c.t, c.lambda).ok();
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: json!({
                    "weight": to_value(&wt)?,
                    "estimate": to_value(&e.value)?,
                    "lambda0": e.lambda0.map(ext),
                    "bound": bound.map(ext),
                    "warning": e.warning,
                }),
                table: None,
                failure: None,
            })
        }
        Command::Convergence(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, None, 1.0)?;
            let cfg = LocalTimeConfig {
                workers: w,
                ..LocalTimeConfig::new(c.t, c.n_steps, c.n_paths, c.seed)
            };
            let wt = weight_for(&m, c.delta, c.t);
            let rows = convergence_study(&m, &wt, &c.eps_list, &cfg)?;
            let table = rows
                .iter()
                .map(|r| {
                    let [m1, m1s] = est_row(&r.moment1);
                    let [m2, m2s] = est_row(&r.moment2);
                    let [d, ds] = r.diff.as_ref().map_or([Value::Null, Value::Null], est_row);
                    vec![ext(r.eps), m1, m1s, m2, m2s, d, ds, r.l2_diff.map_or(Value::Null, ext)]
                })
                .collect();
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: json!({ "weight": to_value(&wt)?, "rows": to_value(&rows)? }),
                table: Some(Table {
                    headers: vec!["eps", "moment1", "moment1_se", "moment2", "moment2_se", "diff", "diff_se", "l2_diff"],
                    rows: table,
                }),
                failure: None,
            })
        }
        Command::FkMoment(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, 1.0)?;
            let u0 = match c.u0 {
                InitialChoice::Constant => InitialCondition::Constant { c: c.u0_amplitude },
                InitialChoice::Cosine => InitialCondition::Cosine {
                    amplitude: c.u0_amplitude,
                    omega: if c.u0_omega.is_empty() { vec![1.0; c.d] } else { c.u0_omega.clone() },
                },
                InitialChoice::GaussianBump => InitialCondition::GaussianBump {
                    amplitude: c.u0_amplitude,
                    width: c.u0_width,
                },
            };
            let cfg = FkConfig {
                x: c.x.clone(),
                workers: w,
                ..FkConfig::new(c.t, c.eps, c.n_steps, c.n_samples, c.seed)
            };
            let result = if c.extrapolate {
                to_value(&fk_moment_extrapolated(&m, &u0, c.k, &cfg)?)?
            } else {
                to_value(&fk_moment(&m, &u0, c.k, &cfg)?)?
            };
            if let Some(note) = result.get("regime_note").and_then(Value::as_str) {
                eprintln!("warning: {note}");
            }
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result,
                table: None,
                failure: None,
            })
        }
        Command::Compare(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, c.c_star)?;
            let fk = FkConfig {
                workers: w,
                ..FkConfig::new(c.t, c.eps, c.n_steps, c.n_samples, c.seed)
            };
            let series = SeriesConfig {
                tail_tol: c.tail_tol,
                max_order: c.max_order,
                quadrature_nodes: c.nodes,
                mc_samples: c.mc_samples,
                seed: c.seed,
                workers: w,
            };
            let r = compare_with_chaos(&m, c.tail_tol, &fk, &series)?;
            let failure = match (&r.series, &r.reason) {
                (None, Some(reason)) => Some(Error::Numerical(reason.clone())),
                _ => None,
            };
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: to_value(&r)?,
                table: None,
                failure,
            })
        }
        Command::Regime(a) => {
            let c = merge(file, &a)?.resolve()?;
            let m = make_model(c.kernel, c.alpha, c.d, c.hurst, c.beta_h, c.c_star)?;
            let r = existence_report(&m, c.max_k)?;
            Ok(Report {
                constants: model_constants(&m),
                config: to_value(&c)?,
                result: to_value(&r)?,
                table: None,
                failure: None,
            })
        }
        Command::Selftest(a) => {
            let c = merge(file, &a)?.resolve()?;
            let checks = crate::selftest::run(c.seed, workers);
            let failed = checks.iter().filter(|x| !x.pass).count();
            Ok(Report {
                constants: json!({}),
                config: to_value(&c)?,
                result: json!({ "checks": to_value(&checks)?, "failed": failed }),
                table: None,
                failure: (failed > 0).then(|| Error::Numerical(format!("{failed} self-test checks failed"))),
            })
        }
    }
}

/// Load `--config`: a plain config object, or the metadata of an emitted
/// JSON document or CSV file (taken from its `config` entry).
fn load_config(path: &Path, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let json_text = match text.strip_prefix("# ") {
        Some(rest) => rest.lines().next().unwrap_or_default(),
        None => text.as_str(),
    };
    let v: Value = serde_json::from_str(json_text)
        .map_err(|e| Error::InvalidConfig(format!("config {} is not valid JSON: {e}", path.display())))?;
    if v.get("schema_version").is_some() {
        if let Some(cmd) = v.get("command").and_then(Value::as_str) {
            if cmd != command {
                return Err(Error::InvalidConfig(format!(
                    "config was emitted by `{cmd}`, not `{command}`"
                )));
            }
        }
        return v
            .get("config")
            .cloned()
            .ok_or_else(|| Error::InvalidConfig("emitted document has no config block".into()));
    }
    Ok(v)
}

fn metadata(command: &str, config: Value, constants: Value) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("tool".into(), json!(TOOL));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert("config".into(), config);
    m.insert("constants".into(), constants);
    m
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(command: &str, report: Report, format: Format) -> Result<Vec<u8>> {
    let mut meta = metadata(command, report.config, report.constants);
    if let Some(e) = &report.failure {
        meta.insert("error".into(), json!({ "kind": e.kind(), "message": e.to_string() }));
    }
    match format {
        Format::Json => {
            meta.insert("result".into(), report.result);
            let mut s = serde_json::to_string_pretty(&Value::Object(meta)).map_err(|e| Error::Numerical(e.to_string()))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
        Format::Csv => {
            let table = report
                .table
                .ok_or_else(|| Error::InvalidConfig(format!("`{command}` has no tabular output; use --format json")))?;
            let mut out = Vec::new();
            writeln!(out, "# {}", Value::Object(meta)).map_err(|e| Error::Numerical(e.to_string()))?;
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
            w.write_record(&table.headers).map_err(io)?;
            for row in &table.rows {
                w.write_record(row.iter().map(csv_cell)).map_err(io)?;
            }
            w.flush().map_err(|e| Error::Numerical(e.to_string()))?;
            drop(w);
            Ok(out)
        }
    }
}

fn error_doc(command: &str, e: &Error) -> Vec<u8> {
    let mut meta = metadata(command, Value::Null, json!({}));
    meta.insert("error".into(), json!({ "kind": e.kind(), "message": e.to_string() }));
    let mut s = serde_json::to_string_pretty(&Value::Object(meta)).unwrap_or_default();
    s.push('\n');
    s.into_bytes()
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        3
    }
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidConfig(format!("cannot write output: {e}"));
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(io),
        None => std::io::stdout().write_all(bytes).map_err(io),
    }
}

/// Parse `argv`, run the command and return the process exit code:
/// 0 on success, 2 on validation errors, 3 on numerical failures.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = cli.command.name();
    let format = cli.format.unwrap_or_else(|| {
        match cli.output.as_ref().and_then(|p| p.extension()).and_then(|x| x.to_str()) {
            Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            _ if matches!(cli.command, Command::KernelEval(_) | Command::Convergence(_)) => Format::Csv,
            _ => Format::Json,
        }
    });
    let workers = cli.workers.unwrap_or_else(default_workers);
    let outcome = (|| {
        if workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        let file = cli.config.as_deref().map(|p| load_config(p, command)).transpose()?;
        run_command(cli.command, file, workers)
    })();
    let report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            if !e.is_validation() {
                let _ = write_out(cli.output.as_deref(), &error_doc(command, &e));
            }
            return ExitCode::from(exit_code(&e));
        }
    };
    let code = report.failure.as_ref().map_or(0, exit_code);
    if let Some(e) = &report.failure {
        eprintln!("error: {e}");
    }
    match render(command, report, format).and_then(|bytes| write_out(cli.output.as_deref(), &bytes)) {
        Ok(()) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
