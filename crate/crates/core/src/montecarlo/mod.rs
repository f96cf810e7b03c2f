//! Numerical validation: Euler-Maruyama and Heun on shared Brownian
//! increments, finite symmetry maps on ensembles and statistics.
//!
//! Randomness: ChaCha8 seeded with `seed`, stream = path index, so every
//! path is reproducible on its own and parallel runs match serial ones.
//! Normal variates come from the inverse normal CDF applied to
//! `(u64 >> 11 + 1/2) / 2^53`.

mod flow;
mod stats;
mod validate;

pub use flow::{apply_group_map, Flow, FlowAt};
pub use stats::{ks_two_sample, KsResult, StatsReport, TimeStats, Welford, KS_CRITICAL_0_001};
pub use validate::{
    evaluate_solution_form, pipeline_check, symmetry_validation, Comparison, PipelineReport, StatVerdict,
    ValidationReport, MAX_EXCLUDED, Z_LIMIT,
};

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Program};
use crate::sde::{Diffusion, ItoSystem, StratSystem};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum McError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("initial state has {got} components, system has n = {n}")]
    InitialState { n: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("flow needs a simple field (tau = 0)")]
    NotSimple,
    #[error("flow left the coefficient domain")]
    FlowEscape,
    #[error("ensemble was run without keeping paths")]
    PathsNotKept,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Time grid shared by every path of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub t0: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(t0: f64, horizon: f64, dt: f64) -> Result<GridSpec, McError> {
        if !(dt > 0.0) || !(horizon > t0) || !dt.is_finite() || !horizon.is_finite() {
            return Err(McError::Grid(format!("need dt > 0 and T > t0, got dt = {dt}, [{t0}, {horizon}]")));
        }
        Ok(GridSpec { t0, horizon, dt })
    }

    pub fn steps(&self) -> usize {
        ((self.horizon - self.t0) / self.dt).round().max(1.0) as usize
    }

    pub fn time(&self, s: usize) -> f64 {
        self.t0 + s as f64 * self.dt
    }
}

/// Increments of `m` Wiener processes for one path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrownianGrid {
    pub spec: GridSpec,
    pub m: usize,
    pub seed: u64,
    pub path: u64,
    /// Value of `w` at `t0`; zero for generated grids.
    pub w0: Vec<f64>,
    /// `steps * m`, row-major by step.
    pub increments: Vec<f64>,
}

fn unit_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl BrownianGrid {
    pub fn generate(spec: GridSpec, m: usize, seed: u64, path: u64) -> BrownianGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let normal = Normal::standard();
        let sd = spec.dt.sqrt();
        let increments = (0..spec.steps() * m)
            .map(|_| sd * normal.inverse_cdf(unit_open(&mut rng)))
            .collect();
        BrownianGrid {
            spec,
            m,
            seed,
            path,
            w0: vec![0.0; m],
            increments,
        }
    }

    pub fn from_path(spec: GridSpec, w: &[Vec<f64>]) -> Result<BrownianGrid, McError> {
        if w.len() != spec.steps() + 1 {
            return Err(McError::Grid(format!("path has {} points, grid needs {}", w.len(), spec.steps() + 1)));
        }
        let m = w[0].len();
        let increments = w.windows(2).flat_map(|p| (0..m).map(move |k| p[1][k] - p[0][k])).collect();
        Ok(BrownianGrid {
            spec,
            m,
            seed: 0,
            path: 0,
            w0: w[0].clone(),
            increments,
        })
    }

    pub fn steps(&self) -> usize {
        self.spec.steps()
    }

    pub fn increment(&self, s: usize) -> &[f64] {
        &self.increments[s * self.m..(s + 1) * self.m]
    }

    /// `w(t_s)` for every grid point.
    pub fn w_path(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps() + 1);
        let mut w = self.w0.clone();
        out.push(w.clone());
        for s in 0..self.steps() {
            for (wk, dk) in w.iter_mut().zip(self.increment(s)) {
                *wk += dk;
            }
            out.push(w.clone());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    Heun,
}

/// Coefficients compiled for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    pub n: usize,
    pub m: usize,
    drift: Vec<Program>,
    /// Row-major `n * m`.
    sigma: Vec<Program>,
}

impl CompiledSystem {
    fn build<S: Diffusion + ?Sized>(sys: &S, drift: &[Expr]) -> Result<CompiledSystem, McError> {
        let params: BTreeMap<String, f64> = sys.ctx().numeric_params();
        Ok(CompiledSystem {
            n: sys.n(),
            m: sys.m(),
            drift: drift.iter().map(|e| Program::compile(e, &params)).collect::<Result<_, _>>()?,
            sigma: sys
                .sigma()
                .iter()
                .flatten()
                .map(|e| Program::compile(e, &params))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn ito(sys: &ItoSystem) -> Result<CompiledSystem, McError> {
        CompiledSystem::build(sys, sys.f())
    }

    pub fn strat(sys: &StratSystem) -> Result<CompiledSystem, McError> {
        CompiledSystem::build(sys, sys.b())
    }

    fn eval(&self, x: &[f64], t: f64, stack: &mut Vec<f64>, f: &mut [f64], s: &mut [f64]) {
        for (o, p) in f.iter_mut().zip(&self.drift) {
            *o = p.eval_with(stack, x, t, &[]);
        }
        for (o, p) in s.iter_mut().zip(&self.sigma) {
            *o = p.eval_with(stack, x, t, &[]);
        }
    }
}

/// Which system and scheme a run uses.
#[derive(Clone, Debug)]
pub enum Dynamics {
    Ito(ItoSystem),
    Strat(StratSystem),
}

impl Dynamics {
    pub fn scheme(&self) -> Scheme {
        match self {
            Dynamics::Ito(_) => Scheme::EulerMaruyama,
            Dynamics::Strat(_) => Scheme::Heun,
        }
    }

    pub fn compile(&self) -> Result<CompiledSystem, McError> {
        match self {
            Dynamics::Ito(s) => CompiledSystem::ito(s),
            Dynamics::Strat(s) => CompiledSystem::strat(s),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Dynamics::Ito(s) => s.n(),
            Dynamics::Strat(s) => s.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Dynamics::Ito(s) => s.m(),
            Dynamics::Strat(s) => s.m(),
        }
    }
}

const DIVERGENCE: f64 = 1e12;

/// Integrates one path; `None` when it diverges.
pub fn integrate_path(
    sys: &CompiledSystem,
    scheme: Scheme,
    x0: &[f64],
    grid: &BrownianGrid,
) -> Option<Vec<Vec<f64>>> {
    let (n, m) = (sys.n, sys.m);
    let mut stack = Vec::new();
    let (mut f, mut s) = (vec![0.0; n], vec![0.0; n * m]);
    let (mut f2, mut s2) = (vec![0.0; n], vec![0.0; n * m]);
    let mut pred = vec![0.0; n];
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(x.clone());
    let dt = grid.spec.dt;
    for step in 0..grid.steps() {
        let t = grid.spec.time(step);
        let dw = grid.increment(step);
        sys.eval(&x, t, &mut stack, &mut f, &mut s);
        for i in 0..n {
            pred[i] = x[i] + f[i] * dt + (0..m).map(|k| s[i * m + k] * dw[k]).sum::<f64>();
        }
        match scheme {
            Scheme::EulerMaruyama => x.copy_from_slice(&pred),
            Scheme::Heun => {
                sys.eval(&pred, t + dt, &mut stack, &mut f2, &mut s2);
                for i in 0..n {
                    x[i] += 0.5 * (f[i] + f2[i]) * dt
                        + (0..m).map(|k| 0.5 * (s[i * m + k] + s2[i * m + k]) * dw[k]).sum::<f64>();
                }
            }
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE) {
            return None;
        }
        out.push(x.clone());
    }
    Some(out)
}

/// Run parameters echoed in every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimOptions {
    pub spec: GridSpec,
    pub paths: usize,
    pub seed: u64,
    /// Keep full trajectories and grids (memory grows with paths * steps).
    pub keep_paths: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRecord {
    pub index: u64,
    pub grid: BrownianGrid,
    pub x: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ensemble {
    pub options: SimOptions,
    pub scheme: Scheme,
    pub n: usize,
    pub stats: StatsReport,
    /// Terminal states of the included paths, in path order.
    #[serde(skip)]
    pub terminal: Vec<Vec<f64>>,
    /// Indices of excluded (divergent) paths.
    pub excluded: Vec<u64>,
    #[serde(skip)]
    pub paths: Option<Vec<PathRecord>>,
}

impl Ensemble {
    pub fn excluded_fraction(&self) -> f64 {
        self.excluded.len() as f64 / self.options.paths.max(1) as f64
    }
}

const CHUNK: usize = 256;

struct Chunk {
    stats: TimeStats,
    terminal: Vec<Vec<f64>>,
    excluded: Vec<u64>,
    kept: Vec<PathRecord>,
}

/// Runs `paths` independent paths through `per_path` in fixed-size chunks
/// and merges in path order, so results do not depend on the thread count.
pub(crate) fn run_chunked<T: Send>(paths: usize, per_path: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let chunks: Vec<Vec<T>> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(paths);
            (lo..hi).map(|p| per_path(p as u64)).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

fn simulate(dynamics: &Dynamics, x0: &[f64], opts: &SimOptions) -> Result<Ensemble, McError> {
    let n = dynamics.n();
    if x0.len() != n {
        return Err(McError::InitialState { n, got: x0.len() });
    }
    let sys = dynamics.compile()?;
    let scheme = dynamics.scheme();
    let steps = opts.spec.steps();
    let chunks: Vec<Chunk> = (0..opts.paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut ch = Chunk {
                stats: TimeStats::new(steps + 1, n),
                terminal: Vec::new(),
                excluded: Vec::new(),
                kept: Vec::new(),
            };
            for p in (c * CHUNK)..((c + 1) * CHUNK).min(opts.paths) {
                let grid = BrownianGrid::generate(opts.spec, sys.m, opts.seed, p as u64);
                match integrate_path(&sys, scheme, x0, &grid) {
                    Some(x) => {
                        ch.stats.push_path(&x);
                        ch.terminal.push(x[steps].clone());
                        if opts.keep_paths {
                            ch.kept.push(PathRecord { index: p as u64, grid, x });
                        }
                    }
                    None => ch.excluded.push(p as u64),
                }
            }
            ch
        })
        .collect();
    let mut stats = TimeStats::new(steps + 1, n);
    let mut terminal = Vec::new();
    let mut excluded = Vec::new();
    let mut kept = Vec::new();
    for ch in chunks {
        stats.merge(&ch.stats);
        terminal.extend(ch.terminal);
        excluded.extend(ch.excluded);
        kept.extend(ch.kept);
    }
    Ok(Ensemble {
        options: opts.clone(),
        scheme,
        n,
        stats: stats.report(&opts.spec, excluded.len()),
        terminal,
        excluded,
        paths: opts.keep_paths.then_some(kept),
    })
}

/// `x_{s+1} = x_s + f dt + sigma dW`.
pub fn euler_maruyama(sys: &ItoSystem, x0: &[f64], opts: &SimOptions) -> Result<Ensemble, McError> {
    simulate(&Dynamics::Ito(sys.clone()), x0, opts)
}

/// Predictor-corrector converging to the Stratonovich solution.
pub fn heun_stratonovich(sys: &StratSystem, x0: &[f64], opts: &SimOptions) -> Result<Ensemble, McError> {
    simulate(&Dynamics::Strat(sys.clone()), x0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Context, ParamValue};

    fn linear(a: f64, b: f64) -> ItoSystem {
        let ctx = Context::scalar()
            .with_param("A", ParamValue::Numeric(a))
            .unwrap()
            .with_param("B", ParamValue::Numeric(b))
            .unwrap();
        ItoSystem::new(ctx.clone(), vec![parse("A", &ctx).unwrap()], vec![vec![parse("B", &ctx).unwrap()]]).unwrap()
    }

    #[test]
    fn grids_are_reproducible_per_path() {
        let spec = GridSpec::new(0.0, 1.0, 0.01).unwrap();
        let a = BrownianGrid::generate(spec, 2, 7, 3);
        let b = BrownianGrid::generate(spec, 2, 7, 3);
        let c = BrownianGrid::generate(spec, 2, 7, 4);
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
        let w = a.w_path();
        assert_eq!(w.len(), 101);
        let back = BrownianGrid::from_path(spec, &w).unwrap();
        for (x, y) in back.increments.iter().zip(&a.increments) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_coefficients_exact() {
        let sys = linear(0.7, -1.3);
        let opts = SimOptions {
            spec: GridSpec::new(0.0, 1.0, 1e-2).unwrap(),
            paths: 40,
            seed: 11,
            keep_paths: true,
        };
        let ens = euler_maruyama(&sys, &[0.5], &opts).unwrap();
        for rec in ens.paths.unwrap() {
            let w = rec.grid.w_path();
            for (s, x) in rec.x.iter().enumerate() {
                let exact = 0.5 + 0.7 * opts.spec.time(s) - 1.3 * w[s][0];
                assert!((x[0] - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn heun_matches_em_for_constant_sigma() {
        let sys = linear(0.2, 0.4);
        let opts = SimOptions {
            spec: GridSpec::new(0.0, 1.0, 1e-2).unwrap(),
            paths: 10,
            seed: 5,
            keep_paths: false,
        };
        let a = euler_maruyama(&sys, &[1.0], &opts).unwrap();
        let b = heun_stratonovich(&sys.to_strat(), &[1.0], &opts).unwrap();
        for (x, y) in a.terminal.iter().zip(&b.terminal) {
            assert!((x[0] - y[0]).abs() < 1e-12);
        }
    }
}
