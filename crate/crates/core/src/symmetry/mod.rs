//! Candidate symmetry generators, their classification, determining
//! equations, the Ito/Stratonovich discrepancy analysis and Lie brackets.

mod bracket;
mod discrepancy;
mod residuals;

pub use bracket::{lie_bracket, solvability_check, Solvability, StructureConstants};
pub use discrepancy::{
    calr_term, combine_zero, sdil_check, sdil_lhs, sigma_operator, theorem1_analysis, Agreement, DiscrepancyReport,
};
pub use residuals::{
    residual_standard_ito, residual_w_ito, residual_w_strat, Calculus, FamilyReport, Residual,
    ResidualOptions, SymmetryReport, Verdict,
};
pub use residuals::zero_tests;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{
    evaluate, halton_points, is_identically_zero, Context, Expr, Point, VarId, ZeroTestConfig,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SymmetryError {
    #[error("vector field has {got} phi components, system has n = {n}")]
    PhiDimension { n: usize, got: usize },
    #[error("noise part has dimension {got}, system has m = {m}")]
    NoiseDimension { m: usize, got: usize },
    #[error("vector field acts on time (tau != 0); Kozlov theory only uses simple symmetries")]
    NotSimple,
    #[error("{0}")]
    WrongNoiseKind(&'static str),
    #[error("R is not an admissible W-generator: {0}")]
    NotConformal(String),
    #[error("Lie bracket of fields with different noise kinds")]
    MixedNoise,
    #[error("no generators given")]
    Empty,
}

/// The `dhat_k` component of a vector field.
#[derive(Clone, Debug, PartialEq)]
pub enum Noise {
    None,
    /// Arbitrary `h^k(x,t,w)`.
    GeneralH(Vec<Expr>),
    /// `h^k = R^k_m w^m` with constant `R`.
    LinearW(DMatrix<f64>),
}

/// `X = tau d_t + phi^i d_i + h^k dhat_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub phi: Vec<Expr>,
    pub tau: Expr,
    pub noise: Noise,
}

impl VectorField {
    pub fn simple(phi: Vec<Expr>) -> Self {
        VectorField {
            phi: phi.iter().map(Expr::simplified).collect(),
            tau: Expr::zero(),
            noise: Noise::None,
        }
    }

    pub fn linear_w(phi: Vec<Expr>, r: DMatrix<f64>) -> Self {
        VectorField {
            noise: Noise::LinearW(r),
            ..VectorField::simple(phi)
        }
    }

    pub fn general_h(phi: Vec<Expr>, h: Vec<Expr>) -> Self {
        VectorField {
            noise: Noise::GeneralH(h.iter().map(Expr::simplified).collect()),
            ..VectorField::simple(phi)
        }
    }

    pub fn with_tau(mut self, tau: Expr) -> Self {
        self.tau = tau.simplified();
        self
    }

    /// The `h^k` components as expressions (zeros for `Noise::None`).
    pub fn h(&self, m: usize) -> Vec<Expr> {
        match &self.noise {
            Noise::None => vec![Expr::zero(); m],
            Noise::GeneralH(h) => h.clone(),
            Noise::LinearW(r) => (0..r.nrows())
                .map(|k| {
                    Expr::sum((0..r.ncols()).filter(|&j| r[(k, j)] != 0.0).map(|j| {
                        Expr::real(r[(k, j)]) * Expr::wiener(j)
                    }))
                    .simplified()
                })
                .collect(),
        }
    }

    /// `X(u)`.
    pub fn apply(&self, u: &Expr) -> Expr {
        let mut terms = Vec::new();
        if !self.tau.is_zero() {
            terms.push(&self.tau * u.diff(VarId::Time));
        }
        for (i, p) in self.phi.iter().enumerate() {
            if !p.is_zero() {
                terms.push(p * u.diff(VarId::State(i)));
            }
        }
        // Noise::None contributes nothing, so no dimension is needed
        for (k, hk) in self.h(0).iter().enumerate() {
            if !hk.is_zero() {
                terms.push(hk * u.diff(VarId::Wiener(k)));
            }
        }
        Expr::sum(terms).simplified()
    }

    pub(crate) fn check_dims(&self, ctx: &Context) -> Result<(), SymmetryError> {
        if self.phi.len() != ctx.n {
            return Err(SymmetryError::PhiDimension {
                n: ctx.n,
                got: self.phi.len(),
            });
        }
        match &self.noise {
            Noise::LinearW(r) if r.nrows() != ctx.m || r.ncols() != ctx.m => {
                Err(SymmetryError::NoiseDimension {
                    m: ctx.m,
                    got: r.nrows().max(r.ncols()),
                })
            }
            Noise::GeneralH(h) if h.len() != ctx.m => Err(SymmetryError::NoiseDimension {
                m: ctx.m,
                got: h.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Outcome of the generator-level conformality test `R + R^T = 2 lambda I`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Conformal {
    Admissible {
        lambda: f64,
        #[serde(serialize_with = "serialize_matrix")]
        skew: DMatrix<f64>,
    },
    Rejected {
        reason: String,
    },
}

impl Conformal {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Conformal::Admissible { .. })
    }
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

pub fn conformal_check(r: &DMatrix<f64>) -> Conformal {
    if r.nrows() != r.ncols() || r.nrows() == 0 {
        return Conformal::Rejected {
            reason: format!("R must be square, got {}x{}", r.nrows(), r.ncols()),
        };
    }
    let m = r.nrows();
    let lambda = r.trace() / m as f64;
    let sym = (r + r.transpose()) * 0.5;
    let dev = &sym - DMatrix::identity(m, m) * lambda;
    let tol = 1e-12 * r.norm().max(1.0);
    if dev.amax() > tol {
        return Conformal::Rejected {
            reason: format!(
                "symmetric part of R is not a multiple of the identity (deviation {:.3e})",
                dev.amax()
            ),
        };
    }
    Conformal::Admissible {
        lambda,
        skew: (r - r.transpose()) * 0.5,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub acting_on_time: bool,
    /// `phi` depends on some Wiener variable.
    pub random: bool,
    pub w_acting: bool,
    pub simple: bool,
    pub admissible: bool,
    pub reasons: Vec<String>,
    /// Set when tau depends on t and its positivity was checked by sampling.
    pub sampled_positivity: bool,
    pub conformal: Option<Conformal>,
}

/// Extracts a constant `R` from `h` when `h^k = R^k_m w^m` exactly.
pub fn linear_w_matrix(h: &[Expr], ctx: &Context, cfg: &ZeroTestConfig) -> Option<DMatrix<f64>> {
    let m = ctx.m;
    let params = ctx.numeric_params();
    let origin = Point::new(vec![0.0; ctx.n], 0.0, vec![0.0; m]);
    let mut r = DMatrix::zeros(h.len(), m);
    for (k, hk) in h.iter().enumerate() {
        let mut rebuilt = Vec::new();
        for j in 0..m {
            let d = hk.diff(VarId::Wiener(j));
            if !d.free_vars().is_empty() || !d.params().iter().all(|p| params.contains_key(p)) {
                return None;
            }
            r[(k, j)] = evaluate(&d, &origin, &params).ok()?;
            rebuilt.push(d * Expr::wiener(j));
        }
        if !is_identically_zero(&(hk - Expr::sum(rebuilt)), ctx, cfg).is_zero() {
            return None;
        }
    }
    Some(r)
}

pub fn classify(x: &VectorField, ctx: &Context, cfg: &ZeroTestConfig) -> Classification {
    let mut reasons = Vec::new();
    let zero = |e: &Expr| is_identically_zero(e, ctx, cfg).is_zero();
    let acting_on_time = !zero(&x.tau);
    let random = x
        .phi
        .iter()
        .any(|p| p.depends_on_any(&ctx.wiener_vars()) && !zero_in_w(p, ctx, cfg));
    let h = x.h(ctx.m);
    let w_acting = h.iter().any(|hk| !zero(hk));

    let mut admissible = true;
    let mut sampled_positivity = false;
    if acting_on_time {
        let only_t = x.tau.free_vars().iter().all(|v| *v == VarId::Time);
        if !only_t {
            admissible = false;
            reasons.push("tau depends on variables other than t".into());
        } else {
            sampled_positivity = true;
            let dt = x.tau.diff(VarId::Time);
            let params = ctx.numeric_params();
            let (lo, hi) = cfg.sampling.time;
            let positive = halton_points(1, cfg.samples, cfg.seed).iter().all(|u| {
                let p = Point::new(vec![0.0; ctx.n], lo + (hi - lo) * u[0], vec![0.0; ctx.m]);
                evaluate(&dt, &p, &params).is_ok_and(|v| v > 0.0)
            });
            if !positive {
                admissible = false;
                reasons.push("tau'(t) is not positive at all sampled times".into());
            }
        }
    }

    let mut conformal = None;
    if w_acting {
        let r = match &x.noise {
            Noise::LinearW(r) => Some(r.clone()),
            _ => linear_w_matrix(&h, ctx, cfg),
        };
        match r {
            None => {
                admissible = false;
                reasons.push("h is not linear in w with a constant matrix".into());
            }
            Some(r) => {
                let c = conformal_check(&r);
                if let Conformal::Rejected { reason } = &c {
                    admissible = false;
                    reasons.push(reason.clone());
                }
                conformal = Some(c);
            }
        }
    }
    if admissible {
        reasons.push(if acting_on_time {
            "tau depends only on t with tau' > 0".into()
        } else {
            "simple (tau = 0)".into()
        });
    }
    Classification {
        acting_on_time,
        random,
        w_acting,
        simple: !acting_on_time,
        admissible,
        reasons,
        sampled_positivity,
        conformal,
    }
}

fn zero_in_w(p: &Expr, ctx: &Context, cfg: &ZeroTestConfig) -> bool {
    ctx.wiener_vars()
        .into_iter()
        .all(|w| is_identically_zero(&p.diff(w), ctx, cfg).is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn conformal_examples() {
        let c = conformal_check(&DMatrix::identity(2, 2));
        assert_eq!(
            c,
            Conformal::Admissible {
                lambda: 1.0,
                skew: DMatrix::zeros(2, 2)
            }
        );
        assert!(!conformal_check(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_admissible());
        match conformal_check(&DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])) {
            Conformal::Admissible { lambda, skew } => {
                assert_eq!(lambda, 0.0);
                assert_eq!(skew[(1, 0)], 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        let ctx = Context::scalar();
        let cfg = ZeroTestConfig::default();
        let x1 = VectorField::simple(vec![parse("exp(-x)", &ctx).unwrap()]);
        let c = classify(&x1, &ctx, &cfg);
        assert!(c.simple && !c.random && c.admissible && !c.w_acting);

        let x2 = VectorField::simple(vec![parse("exp(x - w)", &ctx).unwrap()]);
        let c = classify(&x2, &ctx, &cfg);
        assert!(c.simple && c.random && c.admissible);

        let dt = VectorField::simple(vec![Expr::zero()]).with_tau(Expr::one());
        let c = classify(&dt, &ctx, &cfg);
        assert!(!c.simple && c.acting_on_time && !c.random && !c.admissible);

        let grow = VectorField::simple(vec![Expr::zero()]).with_tau(parse("t^2", &ctx).unwrap());
        assert!(classify(&grow, &ctx, &cfg).admissible);
    }

    #[test]
    fn general_h_linear_in_w_is_recognised() {
        let ctx = Context::scalar();
        let cfg = ZeroTestConfig::default();
        let x = VectorField::general_h(vec![Expr::state(0)], vec![parse("2*w", &ctx).unwrap()]);
        let c = classify(&x, &ctx, &cfg);
        assert!(c.w_acting && c.admissible, "{c:?}");
        let x = VectorField::general_h(vec![Expr::state(0)], vec![parse("w^2", &ctx).unwrap()]);
        assert!(!classify(&x, &ctx, &cfg).admissible);
    }
}
