//! Synthetic instances and the noise, degeneracy and timing experiments.
//!
//! Every trial draws from its own `ChaCha8Rng` seeded by
//! [`trial_seed`]`(seed, group, trial)`, where `group` is the bit pattern of
//! the swept parameter. Results therefore do not depend on thread count,
//! trial order or the other values in the sweep.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{refine_ml, solve_linear, MlOptions};
use crate::error::{Error, Result};
use crate::problem::{clamp_distances, dist, Point, TrilaterationProblem};
use crate::solver::{solve, solve_simple, SolverOptions};
use crate::weights::weights_toa;

/// Local ML reference. Gauss–Newton converges only linearly on large
/// residuals, so the reference allows more iterations than the default.
pub const ML_REFERENCE: MlOptions = MlOptions { max_iterations: 1000, tol: None, initial_damping: 1e-3 };

/// Success threshold on position error.
pub const SUCCESS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub senders: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Factor applied to the first coordinate of every sender.
    pub degenerate_scale: Option<f64>,
}

impl SynthConfig {
    pub fn new(dim: usize, senders: usize, sigma: f64, seed: u64) -> Self {
        SynthConfig { dim, senders, sigma, seed, degenerate_scale: None }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in sweep group `group`.
pub fn trial_seed(base: u64, group: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(group ^ splitmix64(trial)))
}

/// Standard-normal receiver and senders, distances with additive `N(0, σ²)`
/// noise (clamped), weights `1/(4d²)`.
pub fn gen_synthetic(cfg: &SynthConfig) -> (TrilaterationProblem, Point) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let truth: Point = (0..cfg.dim).map(|_| normal()).collect();
    let scale = cfg.degenerate_scale.unwrap_or(1.0);
    let senders: Vec<Point> = (0..cfg.senders)
        .map(|_| {
            let mut s: Point = (0..cfg.dim).map(|_| normal()).collect();
            if let Some(first) = s.first_mut() {
                *first *= scale;
            }
            s
        })
        .collect();
    let raw: Vec<f64> = senders.iter().map(|s| dist(s, &truth) + cfg.sigma * normal()).collect();
    let distances = clamp_distances(&raw);
    let weights = weights_toa(&distances, &vec![1.0; distances.len()]);
    (TrilaterationProblem::new(cfg.dim, senders, distances, weights), truth)
}

/// Noiseless instance with 6 senders in `R³` whose first coordinates are scaled by `scale`.
pub fn gen_degenerate(scale: f64, seed: u64) -> (TrilaterationProblem, Point) {
    gen_synthetic(&SynthConfig { dim: 3, senders: 6, sigma: 0.0, seed, degenerate_scale: Some(scale) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Eigenvalue solver with degenerate-case handling.
    Alg2,
    /// Simplified eigenvalue solver.
    Alg1,
    Linear,
    /// Local ML refinement initialized at the ground truth.
    Ml,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Alg2 => "alg2",
            Solver::Alg1 => "alg1",
            Solver::Linear => "linear",
            Solver::Ml => "ml",
        }
    }

    /// Position error of this solver on `p`; failures count as infinite.
    pub fn error(self, p: &TrilaterationProblem, truth: &[f64], opts: &SolverOptions) -> f64 {
        let point = |r: Result<Point>| r.map(|x| dist(&x, truth)).unwrap_or(f64::INFINITY);
        match self {
            Solver::Alg2 => solve(p, opts).map(|s| s.error_to(truth)).unwrap_or(f64::INFINITY),
            // Without the conditioning guard, to expose its numerical behavior.
            Solver::Alg1 => point(solve_simple(p, &SolverOptions { max_condition: f64::INFINITY, ..*opts })),
            Solver::Linear => point(solve_linear(p)),
            Solver::Ml => point(refine_ml(p, truth, &ML_REFERENCE).map(|f| f.x)),
        }
    }

    fn run(self, p: &TrilaterationProblem, x0: &[f64], opts: &SolverOptions) -> bool {
        match self {
            Solver::Alg2 => solve(p, opts).is_ok(),
            Solver::Alg1 => solve_simple(p, opts).is_ok(),
            Solver::Linear => solve_linear(p).is_ok(),
            Solver::Ml => refine_ml(p, x0, &MlOptions::default()).is_ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub error: f64,
    pub success: bool,
    pub runtime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Stats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Stats {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub solver: Solver,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseExperiment {
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub dim: usize,
    pub senders: usize,
    pub solvers: Vec<Solver>,
}

impl NoiseExperiment {
    pub fn new(sigmas: Vec<f64>, trials: usize, seed: u64) -> Self {
        NoiseExperiment {
            sigmas,
            trials,
            seed,
            dim: 3,
            senders: 10,
            solvers: vec![Solver::Alg2, Solver::Alg1, Solver::Linear, Solver::Ml],
        }
    }

    /// Raw (unnormalized) errors, `errors[trial][solver]`, for one `σ`.
    pub fn errors(&self, sigma: f64, opts: &SolverOptions) -> Vec<Vec<f64>> {
        (0..self.trials as u64)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(self.seed, sigma.to_bits(), t);
                let (p, truth) = gen_synthetic(&SynthConfig::new(self.dim, self.senders, sigma, seed));
                self.solvers.iter().map(|s| s.error(&p, &truth, opts)).collect()
            })
            .collect()
    }

    /// Statistics of `error/σ` per `σ` and solver (raw errors when `σ = 0`).
    pub fn run(&self, opts: &SolverOptions) -> Vec<NoiseRow> {
        let mut rows = Vec::new();
        for &sigma in &self.sigmas {
            let errs = self.errors(sigma, opts);
            let norm = if sigma > 0.0 { sigma } else { 1.0 };
            for (k, &solver) in self.solvers.iter().enumerate() {
                let v: Vec<f64> = errs.iter().map(|e| e[k] / norm).collect();
                let s = summarize(&v);
                rows.push(NoiseRow { sigma, solver, mean: s.mean, median: s.median, q1: s.q1, q3: s.q3 });
            }
        }
        rows
    }
}

/// Gaussian-noise accuracy with `n = 3`, `m = 10`.
pub fn run_noise_experiment(sigmas: &[f64], trials: usize, seed: u64) -> Vec<NoiseRow> {
    NoiseExperiment::new(sigmas.to_vec(), trials, seed).run(&SolverOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenRow {
    pub scale: f64,
    pub solver: Solver,
    pub median_error: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegenExperiment {
    pub scales: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub solvers: Vec<Solver>,
}

impl DegenExperiment {
    pub fn new(scales: Vec<f64>, trials: usize, seed: u64) -> Self {
        DegenExperiment { scales, trials, seed, solvers: vec![Solver::Alg2, Solver::Alg1, Solver::Linear] }
    }

    pub fn errors(&self, scale: f64, opts: &SolverOptions) -> Vec<Vec<f64>> {
        (0..self.trials as u64)
            .into_par_iter()
            .map(|t| {
                let (p, truth) = gen_degenerate(scale, trial_seed(self.seed, scale.to_bits(), t));
                self.solvers.iter().map(|s| s.error(&p, &truth, opts)).collect()
            })
            .collect()
    }

    pub fn run(&self, opts: &SolverOptions) -> Vec<DegenRow> {
        let mut rows = Vec::new();
        for &scale in &self.scales {
            let errs = self.errors(scale, opts);
            for (k, &solver) in self.solvers.iter().enumerate() {
                let v: Vec<f64> = errs.iter().map(|e| e[k]).collect();
                let ok = v.iter().filter(|&&e| e < SUCCESS_TOL).count();
                rows.push(DegenRow {
                    scale,
                    solver,
                    median_error: summarize(&v).median,
                    success_rate: ok as f64 / v.len() as f64,
                });
            }
        }
        rows
    }
}

/// Degenerate-scaling stability with `n = 3`, `m = 6`, no noise.
pub fn run_degen_experiment(scales: &[f64], trials: usize, seed: u64) -> Vec<DegenRow> {
    DegenExperiment::new(scales.to_vec(), trials, seed).run(&SolverOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub m: usize,
    pub solver: Solver,
    pub median_seconds: f64,
}

/// Median single-solve wall time on noiseless `R³` instances, run serially.
pub fn run_timing(ms: &[usize], reps: usize, seed: u64) -> Vec<TimingRow> {
    let solvers = [Solver::Alg2, Solver::Alg1, Solver::Linear];
    let opts = SolverOptions::default();
    let mut rows = Vec::new();
    for &m in ms {
        let problems: Vec<(TrilaterationProblem, Point)> = (0..reps as u64)
            .map(|t| gen_synthetic(&SynthConfig::new(3, m, 0.0, trial_seed(seed, m as u64, t))))
            .collect();
        for &solver in &solvers {
            let mut times: Vec<f64> = problems
                .iter()
                .map(|(p, truth)| {
                    let start = Instant::now();
                    let ok = solver.run(p, truth, &opts);
                    let elapsed = start.elapsed().as_secs_f64();
                    std::hint::black_box(ok);
                    elapsed
                })
                .collect();
            times.sort_by(f64::total_cmp);
            rows.push(TimingRow { m, solver, median_seconds: quantile(&times, 0.5) });
        }
    }
    rows
}

/// Caps the global worker pool at `EIGENTRILAT_THREADS` when set.
///
/// Returns the cap that was applied. Has no effect once the pool exists.
pub fn init_threads_from_env() -> Option<usize> {
    let n: usize = std::env::var("EIGENTRILAT_THREADS").ok()?.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok().map(|_| n)
}

fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// `scale,solver,median_error,success_rate`
pub fn write_degen_csv<W: Write>(rows: &[DegenRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

/// `sigma,solver,mean,median,q1,q3`
pub fn write_noise_csv<W: Write>(rows: &[NoiseRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

/// `m,solver,median_seconds`
pub fn write_timing_csv<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

fn solvers_of<'a, T>(rows: &'a [T], solver: impl Fn(&T) -> Solver + 'a) -> Vec<Solver> {
    let mut out: Vec<Solver> = Vec::new();
    for r in rows {
        if !out.contains(&solver(r)) {
            out.push(solver(r));
        }
    }
    out
}

/// Whitespace-separated columns: `scale` then median error and success rate per solver.
pub fn write_degen_gnuplot<W: Write>(rows: &[DegenRow], mut out: W) -> std::io::Result<()> {
    let solvers = solvers_of(rows, |r| r.solver);
    write!(out, "# scale")?;
    for s in &solvers {
        write!(out, " {0}_median {0}_success", s.name())?;
    }
    writeln!(out)?;
    let mut scales: Vec<f64> = rows.iter().map(|r| r.scale).collect();
    scales.dedup();
    for sc in scales {
        write!(out, "{sc:e}")?;
        for s in &solvers {
            match rows.iter().find(|r| r.scale == sc && r.solver == *s) {
                Some(r) => write!(out, " {:e} {}", r.median_error, r.success_rate)?,
                None => write!(out, " nan nan")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Whitespace-separated columns: `sigma` then median, q1, q3 of `error/σ` per solver.
pub fn write_noise_gnuplot<W: Write>(rows: &[NoiseRow], mut out: W) -> std::io::Result<()> {
    let solvers = solvers_of(rows, |r| r.solver);
    write!(out, "# sigma")?;
    for s in &solvers {
        write!(out, " {0}_median {0}_q1 {0}_q3", s.name())?;
    }
    writeln!(out)?;
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    sigmas.dedup();
    for sg in sigmas {
        write!(out, "{sg:e}")?;
        for s in &solvers {
            match rows.iter().find(|r| r.sigma == sg && r.solver == *s) {
                Some(r) => write!(out, " {:e} {:e} {:e}", r.median, r.q1, r.q3)?,
                None => write!(out, " nan nan nan")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn noise_summary(exp: &NoiseExperiment, rows: &[NoiseRow]) -> Value {
    json!({
        "experiment": "noise",
        "seed": exp.seed,
        "trials": exp.trials,
        "dim": exp.dim,
        "senders": exp.senders,
        "ml_init": "ground_truth",
        "ml_max_iterations": ML_REFERENCE.max_iterations,
        "rows": rows.iter().map(|r| json!({
            "sigma": r.sigma, "solver": r.solver.name(), "mean": finite_or_null(r.mean),
            "median": finite_or_null(r.median), "q1": finite_or_null(r.q1), "q3": finite_or_null(r.q3),
        })).collect::<Vec<_>>(),
    })
}

pub fn degen_summary(exp: &DegenExperiment, rows: &[DegenRow]) -> Value {
    json!({
        "experiment": "degen",
        "seed": exp.seed,
        "trials": exp.trials,
        "success_tol": SUCCESS_TOL,
        "rows": rows.iter().map(|r| json!({
            "scale": r.scale, "solver": r.solver.name(),
            "median_error": finite_or_null(r.median_error), "success_rate": r.success_rate,
        })).collect::<Vec<_>>(),
    })
}

pub fn timing_summary(seed: u64, reps: usize, rows: &[TimingRow]) -> Value {
    json!({
        "experiment": "timing",
        "seed": seed,
        "reps": reps,
        "rows": rows.iter().map(|r| json!({
            "m": r.m, "solver": r.solver.name(), "median_seconds": r.median_seconds,
        })).collect::<Vec<_>>(),
    })
}
