//! Finite group maps `exp(s X)` acting pointwise on `(x, w)` at fixed `t`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{BrownianGrid, Ensemble, McError, PathRecord, TimeStats};
use crate::expr::{evaluate, is_identically_zero, Context, Expr, Point, Program, VarId, ZeroTestConfig};
use crate::symmetry::{Noise, VectorField};

#[derive(Clone, Debug)]
pub enum Flow {
    /// `(x, w) -> exp(sK) (x, w)` with `K = [[A, C], [0, R]]` for
    /// `phi = A x + C w`, `h = R w`.
    Linear { k: DMatrix<f64>, n: usize },
    /// Classical RK4 on `dx/ds = phi`, `dw/ds = h`.
    Numeric { phi: Vec<Program>, h: Vec<Program> },
}

/// Constant matrix `L` with `e^i = L^i_j (x, w)^j`, if there is one.
fn linear_in_xw(e: &[Expr], ctx: &Context, cfg: &ZeroTestConfig) -> Option<DMatrix<f64>> {
    let params = ctx.numeric_params();
    let origin = Point::new(vec![0.0; ctx.n], 0.0, vec![0.0; ctx.m]);
    let vars: Vec<VarId> = ctx.state_vars().into_iter().chain(ctx.wiener_vars()).collect();
    let mut a = DMatrix::zeros(e.len(), vars.len());
    for (i, ei) in e.iter().enumerate() {
        let mut rebuilt = Vec::new();
        for (j, &v) in vars.iter().enumerate() {
            let d = ei.diff(v);
            if !d.free_vars().is_empty() || !d.params().iter().all(|p| params.contains_key(p)) {
                return None;
            }
            a[(i, j)] = evaluate(&d, &origin, &params).ok()?;
            rebuilt.push(d * Expr::var(v));
        }
        if !is_identically_zero(&(ei - Expr::sum(rebuilt)), ctx, cfg).is_zero() {
            return None;
        }
    }
    Some(a)
}

impl Flow {
    pub fn new(x: &VectorField, ctx: &Context, cfg: &ZeroTestConfig) -> Result<Flow, McError> {
        if !x.tau.is_zero() {
            return Err(McError::NotSimple);
        }
        let (n, m) = (ctx.n, ctx.m);
        let r = match &x.noise {
            Noise::None => Some(DMatrix::zeros(m, m)),
            Noise::LinearW(r) => Some(r.clone()),
            Noise::GeneralH(_) => None,
        };
        if let (Some(r), Some(a)) = (r, linear_in_xw(&x.phi, ctx, cfg)) {
            let mut k = DMatrix::zeros(n + m, n + m);
            k.view_mut((0, 0), (n, n + m)).copy_from(&a);
            k.view_mut((n, n), (m, m)).copy_from(&r);
            return Ok(Flow::Linear { k, n });
        }
        let params: BTreeMap<String, f64> = ctx.numeric_params();
        let compile = |v: &[Expr]| -> Result<Vec<Program>, McError> {
            Ok(v.iter().map(|e| Program::compile(e, &params)).collect::<Result<_, _>>()?)
        };
        Ok(Flow::Numeric {
            phi: compile(&x.phi)?,
            h: compile(&x.h(ctx.m))?,
        })
    }

    /// The map at a fixed parameter, with matrix exponentials computed once.
    pub fn at(&self, s: f64) -> FlowAt<'_> {
        match self {
            Flow::Linear { k, n } => FlowAt::Linear((k * s).exp(), *n),
            Flow::Numeric { phi, h } => FlowAt::Numeric { phi, h, s },
        }
    }

    pub fn apply(&self, s: f64, x: &[f64], t: f64, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>), McError> {
        self.at(s).apply(x, t, w)
    }
}

pub enum FlowAt<'a> {
    Linear(DMatrix<f64>, usize),
    Numeric { phi: &'a [Program], h: &'a [Program], s: f64 },
}

impl FlowAt<'_> {
    pub fn apply(&self, x: &[f64], t: f64, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>), McError> {
        let (xo, wo) = match self {
            FlowAt::Linear(e, n) => {
                let z: Vec<f64> = x.iter().chain(w).copied().collect();
                let out = e * DMatrix::from_column_slice(z.len(), 1, &z);
                let (a, b) = out.as_slice().split_at(*n);
                (a.to_vec(), b.to_vec())
            }
            FlowAt::Numeric { phi, h, s } => rk4(phi, h, *s, x, t, w),
        };
        if xo.iter().chain(&wo).all(|v| v.is_finite()) {
            Ok((xo, wo))
        } else {
            Err(McError::FlowEscape)
        }
    }
}

fn rk4(phi: &[Program], h: &[Program], s: f64, x: &[f64], t: f64, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let steps = ((s.abs() * 128.0).ceil() as usize).max(64);
    let ds = s / steps as f64;
    let rhs = |z: &[f64]| -> Vec<f64> {
        let (zx, zw) = z.split_at(n);
        phi.iter().chain(h).map(|p| p.eval(zx, t, zw)).collect()
    };
    let mut z: Vec<f64> = x.iter().chain(w).copied().collect();
    let axpy = |z: &[f64], k: &[f64], c: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for _ in 0..steps {
        let k1 = rhs(&z);
        let k2 = rhs(&axpy(&z, &k1, 0.5 * ds));
        let k3 = rhs(&axpy(&z, &k2, 0.5 * ds));
        let k4 = rhs(&axpy(&z, &k3, ds));
        for i in 0..z.len() {
            z[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let wv = z.split_off(n);
    (z, wv)
}

/// Maps every kept path `(x(t), w(t))` through the flow at parameter `s`;
/// the Brownian grids are transformed along with the states.
pub fn apply_group_map(ens: &Ensemble, flow: &Flow, s: f64) -> Result<Ensemble, McError> {
    let paths = ens.paths.as_ref().ok_or(McError::PathsNotKept)?;
    let spec = ens.options.spec;
    let mut stats = TimeStats::new(spec.steps() + 1, ens.n);
    let map = flow.at(s);
    let mut out = Vec::with_capacity(paths.len());
    for rec in paths {
        let w = rec.grid.w_path();
        let mut xs = Vec::with_capacity(w.len());
        let mut ws = Vec::with_capacity(w.len());
        for (k, (xk, wk)) in rec.x.iter().zip(&w).enumerate() {
            let (a, b) = map.apply(xk, spec.time(k), wk)?;
            xs.push(a);
            ws.push(b);
        }
        let mut grid = BrownianGrid::from_path(spec, &ws)?;
        grid.seed = rec.grid.seed;
        grid.path = rec.grid.path;
        stats.push_path(&xs);
        out.push(PathRecord {
            index: rec.index,
            grid,
            x: xs,
        });
    }
    Ok(Ensemble {
        options: ens.options.clone(),
        scheme: ens.scheme,
        n: ens.n,
        stats: stats.report(&spec, ens.excluded.len()),
        terminal: out.iter().map(|r| r.x.last().cloned().unwrap_or_default()).collect(),
        excluded: ens.excluded.clone(),
        paths: Some(out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn zero_parameter_is_identity() {
        let ctx = Context::scalar();
        let cfg = ZeroTestConfig::default();
        let x = VectorField::general_h(vec![parse("x*w + 1", &ctx).unwrap()], vec![parse("1", &ctx).unwrap()]);
        let f = Flow::new(&x, &ctx, &cfg).unwrap();
        assert!(matches!(f, Flow::Numeric { .. }));
        let (a, b) = f.apply(0.0, &[0.3], 0.1, &[0.7]).unwrap();
        assert_eq!((a[0], b[0]), (0.3, 0.7));
    }

    #[test]
    fn scaling_and_shear() {
        let ctx = Context::scalar();
        let cfg = ZeroTestConfig::default();
        let sc = VectorField::linear_w(vec![parse("x", &ctx).unwrap()], DMatrix::from_element(1, 1, 1.0));
        let f = Flow::new(&sc, &ctx, &cfg).unwrap();
        assert!(matches!(f, Flow::Linear { .. }));
        let (a, b) = f.apply(0.3, &[2.0], 0.0, &[-1.0]).unwrap();
        assert!((a[0] - 2.0 * 0.3f64.exp()).abs() < 1e-14);
        assert!((b[0] + 0.3f64.exp()).abs() < 1e-14);
        // Bw d_x + w d_w: x -> x + Bw(e^s - 1), w -> e^s w
        let ex = VectorField::linear_w(vec![parse("2*w", &ctx).unwrap()], DMatrix::from_element(1, 1, 1.0));
        let e = Flow::new(&ex, &ctx, &cfg).unwrap();
        assert!(matches!(e, Flow::Linear { .. }));
        let (a, b) = e.apply(0.4, &[1.0], 0.0, &[0.5]).unwrap();
        assert!((a[0] - (1.0 + 0.4f64.exp_m1())).abs() < 1e-14);
        assert!((b[0] - 0.5 * 0.4f64.exp()).abs() < 1e-14);
        // x -> x + B(ws + s^2/2), w -> w + s; RK4 is exact on quadratics
        let sh = VectorField::general_h(vec![parse("2*w", &ctx).unwrap()], vec![parse("1", &ctx).unwrap()]);
        let g = Flow::new(&sh, &ctx, &cfg).unwrap();
        let (a, b) = g.apply(0.4, &[1.0], 0.0, &[0.5]).unwrap();
        assert!((a[0] - (1.0 + 2.0 * (0.5 * 0.4 + 0.08))).abs() < 1e-13);
        assert!((b[0] - 0.9).abs() < 1e-14);
    }
}
