//! Ensemble checks: finite symmetry maps against direct simulation, and
//! explicit solutions against Euler-Maruyama.

use serde::Serialize;

use super::stats::{ks_two_sample, KsResult, TimeStats, Welford};
use super::{
    integrate_path, run_chunked, BrownianGrid, CompiledSystem, Dynamics, Flow, McError, Scheme, SimOptions,
    StatsReport,
};
use crate::expr::{EvalError, ZeroTestConfig};
use crate::kozlov::{CompiledSolution, SolutionForm};
use crate::sde::{Diffusion, ItoSystem};
use crate::symmetry::VectorField;

/// Excluded paths above this fraction make a verdict inconclusive.
pub const MAX_EXCLUDED: f64 = 0.05;
/// Mean differences are judged against this many standard errors.
pub const Z_LIMIT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatVerdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Two terminal samples compared component by component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub se_a: Vec<f64>,
    pub se_b: Vec<f64>,
    /// `|mean_a - mean_b| / sqrt(se_a^2 + se_b^2)`.
    pub z: Vec<f64>,
    pub ks: Vec<KsResult>,
    /// Largest `|a - b|` over paths sharing the same noise.
    pub paired_max: f64,
    pub paired_rms: f64,
}

impl Comparison {
    fn new(a: &[Vec<f64>], b: &[Vec<f64>]) -> Comparison {
        let n = a.first().map_or(0, Vec::len);
        let col = |v: &[Vec<f64>], i: usize| -> Vec<f64> { v.iter().map(|x| x[i]).collect() };
        let mut c = Comparison {
            mean_a: vec![],
            mean_b: vec![],
            se_a: vec![],
            se_b: vec![],
            z: vec![],
            ks: vec![],
            paired_max: 0.0,
            paired_rms: 0.0,
        };
        for i in 0..n {
            let (ca, cb) = (col(a, i), col(b, i));
            let (wa, wb) = (Welford::from_slice(&ca), Welford::from_slice(&cb));
            let d = (wa.mean - wb.mean).abs();
            let se = wa.std_error().hypot(wb.std_error());
            let z = if se > 0.0 {
                d / se
            } else if d <= 1e-12 * wa.mean.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            c.mean_a.push(wa.mean);
            c.mean_b.push(wb.mean);
            c.se_a.push(wa.std_error());
            c.se_b.push(wb.std_error());
            c.z.push(z);
            c.ks.push(ks_two_sample(&ca, &cb));
        }
        let mut sq = 0.0;
        let mut count = 0usize;
        for (x, y) in a.iter().zip(b) {
            for (u, v) in x.iter().zip(y) {
                let d = (u - v).abs();
                c.paired_max = c.paired_max.max(d);
                sq += d * d;
                count += 1;
            }
        }
        c.paired_rms = (sq / count.max(1) as f64).sqrt();
        c
    }

    fn verdict(&self, excluded_fraction: f64) -> StatVerdict {
        if excluded_fraction > MAX_EXCLUDED || self.mean_a.is_empty() {
            StatVerdict::Inconclusive
        } else if self.z.iter().all(|z| *z < Z_LIMIT) && self.ks.iter().all(|k| !k.reject) {
            StatVerdict::Pass
        } else {
            StatVerdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scheme: Scheme,
    pub s: f64,
    pub options: SimOptions,
    pub included: usize,
    pub excluded: Vec<u64>,
    pub excluded_fraction: f64,
    /// Mapped trajectories `exp(sX)(x, w)`.
    pub mapped: StatsReport,
    /// Direct runs from the mapped start driven by the mapped noise.
    pub direct: StatsReport,
    pub comparison: Comparison,
    pub verdict: StatVerdict,
}

enum PathOutcome {
    Kept(Vec<Vec<f64>>, Vec<Vec<f64>>),
    Excluded(u64),
}

fn collect(outcomes: Vec<PathOutcome>, times: usize, n: usize) -> (TimeStats, TimeStats, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<u64>) {
    let (mut sa, mut sb) = (TimeStats::new(times, n), TimeStats::new(times, n));
    let (mut ta, mut tb, mut ex) = (vec![], vec![], vec![]);
    for o in outcomes {
        match o {
            PathOutcome::Kept(a, b) => {
                sa.push_path(&a);
                sb.push_path(&b);
                ta.push(a[times - 1].clone());
                tb.push(b[times - 1].clone());
            }
            PathOutcome::Excluded(p) => ex.push(p),
        }
    }
    (sa, sb, ta, tb, ex)
}

/// Simulates `x`, maps every trajectory and its Brownian path through
/// `exp(sX)`, and compares with a direct run from the mapped initial state
/// driven by the mapped Brownian path. Paths that diverge or leave the flow
/// domain in either run are excluded from both samples.
pub fn symmetry_validation(
    dynamics: &Dynamics,
    x: &VectorField,
    s: f64,
    x0: &[f64],
    opts: &SimOptions,
    cfg: &ZeroTestConfig,
) -> Result<ValidationReport, McError> {
    let n = dynamics.n();
    if x0.len() != n {
        return Err(McError::InitialState { n, got: x0.len() });
    }
    let ctx = match dynamics {
        Dynamics::Ito(sys) => sys.ctx(),
        Dynamics::Strat(sys) => sys.ctx(),
    };
    if x.phi.len() != n {
        return Err(McError::Dimension(format!("field has {} components, system n = {n}", x.phi.len())));
    }
    let flow = Flow::new(x, ctx, cfg)?;
    let map = flow.at(s);
    let sys = dynamics.compile()?;
    let scheme = dynamics.scheme();
    let spec = opts.spec;
    let per_path = |p: u64| -> Result<PathOutcome, McError> {
        let grid = BrownianGrid::generate(spec, sys.m, opts.seed, p);
        let Some(xs) = integrate_path(&sys, scheme, x0, &grid) else {
            return Ok(PathOutcome::Excluded(p));
        };
        let w = grid.w_path();
        let mut xt = Vec::with_capacity(xs.len());
        let mut wt = Vec::with_capacity(xs.len());
        for (k, (xk, wk)) in xs.iter().zip(&w).enumerate() {
            match map.apply(xk, spec.time(k), wk) {
                Ok((a, b)) => {
                    xt.push(a);
                    wt.push(b);
                }
                Err(McError::FlowEscape) => return Ok(PathOutcome::Excluded(p)),
                Err(e) => return Err(e),
            }
        }
        let mapped_grid = BrownianGrid::from_path(spec, &wt)?;
        match integrate_path(&sys, scheme, &xt[0], &mapped_grid) {
            Some(direct) => Ok(PathOutcome::Kept(xt, direct)),
            None => Ok(PathOutcome::Excluded(p)),
        }
    };
    let outcomes = run_chunked(opts.paths, per_path).into_iter().collect::<Result<Vec<_>, _>>()?;
    let times = spec.steps() + 1;
    let (sa, sb, ta, tb, excluded) = collect(outcomes, times, n);
    let excluded_fraction = excluded.len() as f64 / opts.paths.max(1) as f64;
    let comparison = Comparison::new(&ta, &tb);
    Ok(ValidationReport {
        scheme,
        s,
        options: opts.clone(),
        included: ta.len(),
        mapped: sa.report(&spec, excluded.len()),
        direct: sb.report(&spec, excluded.len()),
        verdict: comparison.verdict(excluded_fraction),
        comparison,
        excluded_fraction,
        excluded,
    })
}

/// Original variable along one path of `grid`, obtained from the explicit
/// solution and the back map at every grid point.
pub fn evaluate_solution_form(sol: &CompiledSolution, x0: f64, grid: &BrownianGrid) -> Result<Vec<f64>, EvalError> {
    let spec = grid.spec;
    let w = grid.w_path();
    let y0 = sol.new_of_old(x0, spec.t0, &w[0])?;
    let y = sol.path(y0, spec.t0, spec.dt, &w)?;
    y.iter()
        .zip(&w)
        .enumerate()
        .map(|(k, (yk, wk))| sol.old_of_new(*yk, spec.time(k), wk))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub options: SimOptions,
    pub included: usize,
    /// Union of paths outside the solution's domain and divergent direct runs.
    pub excluded: Vec<u64>,
    pub excluded_fraction: f64,
    pub solution: StatsReport,
    pub direct: StatsReport,
    pub comparison: Comparison,
    pub verdict: StatVerdict,
}

/// Explicit solution mapped back to the original variable against
/// Euler-Maruyama on the original equation, path by path on shared noise.
pub fn pipeline_check(sf: &SolutionForm, direct: &ItoSystem, x0: f64, opts: &SimOptions) -> Result<PipelineReport, McError> {
    if direct.n() != 1 {
        return Err(McError::Dimension(format!("pipeline check is scalar, system n = {}", direct.n())));
    }
    let sol = sf.compile(&direct.ctx().numeric_params())?;
    let sys = CompiledSystem::ito(direct)?;
    let spec = opts.spec;
    let per_path = |p: u64| -> PathOutcome {
        let grid = BrownianGrid::generate(spec, sys.m, opts.seed, p);
        let Ok(a) = evaluate_solution_form(&sol, x0, &grid) else {
            return PathOutcome::Excluded(p);
        };
        match integrate_path(&sys, Scheme::EulerMaruyama, &[x0], &grid) {
            Some(b) => PathOutcome::Kept(a.into_iter().map(|v| vec![v]).collect(), b),
            None => PathOutcome::Excluded(p),
        }
    };
    let outcomes = run_chunked(opts.paths, per_path);
    let (sa, sb, ta, tb, excluded) = collect(outcomes, spec.steps() + 1, 1);
    let excluded_fraction = excluded.len() as f64 / opts.paths.max(1) as f64;
    let comparison = Comparison::new(&ta, &tb);
    Ok(PipelineReport {
        options: opts.clone(),
        included: ta.len(),
        solution: sa.report(&spec, excluded.len()),
        direct: sb.report(&spec, excluded.len()),
        verdict: comparison.verdict(excluded_fraction),
        comparison,
        excluded_fraction,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Context};
    use crate::montecarlo::GridSpec;
    use nalgebra::DMatrix;

    fn opts(paths: usize) -> SimOptions {
        SimOptions {
            spec: GridSpec::new(0.0, 1.0, 1e-2).unwrap(),
            paths,
            seed: 3,
            keep_paths: false,
        }
    }

    #[test]
    fn translation_of_additive_noise() {
        // dx = dw is invariant under x -> x + s
        let ctx = Context::scalar();
        let sys = ItoSystem::new(ctx.clone(), vec![parse("0", &ctx).unwrap()], vec![vec![parse("1", &ctx).unwrap()]]).unwrap();
        let x = VectorField::simple(vec![parse("1", &ctx).unwrap()]);
        let r = symmetry_validation(&Dynamics::Ito(sys), &x, 0.7, &[0.0], &opts(500), &ZeroTestConfig::default()).unwrap();
        assert_eq!(r.verdict, StatVerdict::Pass);
        assert!(r.comparison.paired_max < 1e-12);
    }

    #[test]
    fn non_symmetry_fails() {
        // dx = dw is not invariant under x -> e^s x with w fixed
        let ctx = Context::scalar();
        let sys = ItoSystem::new(ctx.clone(), vec![parse("0", &ctx).unwrap()], vec![vec![parse("1", &ctx).unwrap()]]).unwrap();
        let x = VectorField::linear_w(vec![parse("x", &ctx).unwrap()], DMatrix::zeros(1, 1));
        let r = symmetry_validation(&Dynamics::Ito(sys), &x, 1.0, &[1.0], &opts(2000), &ZeroTestConfig::default()).unwrap();
        assert_eq!(r.verdict, StatVerdict::Fail);
    }
}
