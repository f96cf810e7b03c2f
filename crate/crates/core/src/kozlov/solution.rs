//! Explicit solutions of scalar equations whose coefficients no longer depend
//! on the state: `y(t) = y0 + int F(s, w) ds + int S(s, w) dw(s)`.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{ChangeOfVariables, GeneralSde, KozlovError};
use crate::expr::{Context, EvalError, Expr, Program, VarId, ZeroTestConfig};
use crate::symmetry::{combine_zero, zero_tests};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionForm {
    #[serde(skip)]
    pub ctx: Context,
    #[serde(skip)]
    pub drift: Expr,
    #[serde(skip)]
    pub diffusion: Vec<Expr>,
    pub drift_text: String,
    pub diffusion_text: Vec<String>,
    /// New variable as a function of the original `(x, t, w)`.
    #[serde(skip)]
    pub to_new: Option<Expr>,
    /// Original variable as a function of `(y, t, w)`.
    #[serde(skip)]
    pub to_old: Option<Expr>,
    pub to_new_text: Option<String>,
    pub to_old_text: Option<String>,
}

/// Compiled form used along simulated paths.
#[derive(Clone, Debug)]
pub struct CompiledSolution {
    drift: Program,
    diffusion: Vec<Program>,
    to_new: Option<Program>,
    to_old: Option<Program>,
}

fn finite(v: f64, what: &str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("{what} is not finite")))
    }
}

impl CompiledSolution {
    /// `y` along a path. `w[s]` is the Wiener value at `t0 + s dt`
    /// (so `w.len()` is the number of steps plus one). Deterministic
    /// integrals use the trapezoidal rule, stochastic ones the left point.
    pub fn path(&self, y0: f64, t0: f64, dt: f64, w: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::with_capacity(w.len());
        let mut stack = Vec::new();
        let mut y = y0;
        out.push(y);
        let mut f_prev = self.drift.eval_with(&mut stack, &[y], t0, &w[0]);
        for s in 1..w.len() {
            let (t_prev, t) = (t0 + (s - 1) as f64 * dt, t0 + s as f64 * dt);
            let f_next = self.drift.eval_with(&mut stack, &[y], t, &w[s]);
            let mut inc = 0.5 * (f_prev + f_next) * dt;
            for (k, p) in self.diffusion.iter().enumerate() {
                inc += p.eval_with(&mut stack, &[y], t_prev, &w[s - 1]) * (w[s][k] - w[s - 1][k]);
            }
            y = finite(y + inc, "solution")?;
            out.push(y);
            f_prev = f_next;
        }
        Ok(out)
    }

    pub fn new_of_old(&self, x: f64, t: f64, w: &[f64]) -> Result<f64, EvalError> {
        match &self.to_new {
            Some(p) => finite(p.eval(&[x], t, w), "new variable"),
            None => Ok(x),
        }
    }

    pub fn old_of_new(&self, y: f64, t: f64, w: &[f64]) -> Result<f64, EvalError> {
        match &self.to_old {
            Some(p) => finite(p.eval(&[y], t, w), "original variable"),
            None => Ok(y),
        }
    }
}

impl SolutionForm {
    pub fn compile(&self, params: &BTreeMap<String, f64>) -> Result<CompiledSolution, EvalError> {
        Ok(CompiledSolution {
            drift: Program::compile(&self.drift, params)?,
            diffusion: self
                .diffusion
                .iter()
                .map(|e| Program::compile(e, params))
                .collect::<Result<_, _>>()?,
            to_new: self.to_new.as_ref().map(|e| Program::compile(e, params)).transpose()?,
            to_old: self.to_old.as_ref().map(|e| Program::compile(e, params)).transpose()?,
        })
    }
}

/// Builds the explicit solution of a scalar equation whose coefficients do
/// not depend on the state. `cov` supplies the maps back and forth between
/// the original and the integrated variable.
pub fn integrate_scalar(
    sde: &GeneralSde,
    cov: Option<&ChangeOfVariables>,
    cfg: &ZeroTestConfig,
) -> Result<SolutionForm, KozlovError> {
    if sde.ctx.n != 1 {
        return Err(KozlovError::NotScalar);
    }
    let d: Vec<Expr> = std::iter::once(&sde.drift[0])
        .chain(sde.diffusion[0].iter())
        .map(|e| e.diff(VarId::State(0)))
        .collect();
    if !combine_zero(&zero_tests(&d, &sde.ctx, cfg)).is_zero() {
        return Err(KozlovError::StateDependent(format!(
            "F = {}, S = {:?}",
            sde.drift_text[0], sde.diffusion_text[0]
        )));
    }
    // any in-domain value of the state gives the same coefficients
    let (lo, hi) = cfg.sampling.range(VarId::State(0));
    let at = Expr::real(0.5 * (lo + hi));
    let clean = |e: &Expr| e.substitute(VarId::State(0), &at).simplified();
    let drift = clean(&sde.drift[0]);
    let diffusion: Vec<Expr> = sde.diffusion[0].iter().map(clean).collect();
    let pick = |map: Option<&super::CoordMap>| map.map(|c| c.state[0].clone());
    let to_new = cov.and_then(|c| pick(c.new_of_old.as_ref()));
    let to_old = cov.and_then(|c| pick(c.old_of_new.as_ref()));
    let text = |e: &Option<Expr>, ctx: &Context| e.as_ref().map(|e| e.display(ctx).to_string());
    Ok(SolutionForm {
        drift_text: drift.display(&sde.ctx).to_string(),
        diffusion_text: diffusion.iter().map(|e| e.display(&sde.ctx).to_string()).collect(),
        to_new_text: cov.and_then(|c| text(&to_new, &c.old_ctx)),
        to_old_text: cov.and_then(|c| text(&to_old, &c.new_ctx)),
        ctx: sde.ctx.clone(),
        drift,
        diffusion,
        to_new,
        to_old,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ZeroVerdict, ZeroMode};
    use crate::kozlov::Driving;

    fn sde(f: &str, s: &str) -> GeneralSde {
        let ctx = Context::scalar();
        GeneralSde::build(
            ctx.clone(),
            vec![parse(f, &ctx).unwrap()],
            vec![vec![parse(s, &ctx).unwrap()]],
            Driving::Wiener,
            true,
            ZeroVerdict::Zero { mode: ZeroMode::Structural },
        )
    }

    #[test]
    fn drift_plus_noise() {
        let sf = integrate_scalar(&sde("1", "1"), None, &ZeroTestConfig::default()).unwrap();
        let c = sf.compile(&BTreeMap::new()).unwrap();
        let w: Vec<Vec<f64>> = [0.0, 0.3, -0.1, 0.4].iter().map(|v| vec![*v]).collect();
        let y = c.path(2.0, 0.0, 0.25, &w).unwrap();
        for (s, ys) in y.iter().enumerate() {
            assert!((ys - (2.0 + 0.25 * s as f64 + w[s][0])).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_quadrature_exact() {
        let sf = integrate_scalar(&sde("3", "0"), None, &ZeroTestConfig::default()).unwrap();
        let c = sf.compile(&BTreeMap::new()).unwrap();
        let w = vec![vec![0.0]; 11];
        let y = c.path(0.0, 0.0, 0.1, &w).unwrap();
        assert!((y[10] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn state_dependence_rejected() {
        let e = integrate_scalar(&sde("x", "1"), None, &ZeroTestConfig::default());
        assert!(matches!(e, Err(KozlovError::StateDependent(_))));
    }
}
