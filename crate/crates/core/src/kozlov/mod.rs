//! Symmetry-adapted changes of variables: Kozlov integration of scalar
//! equations, coefficient transformation under random and W-maps, Ito
//! preservation tests and sequential reduction.

mod antiderivative;
mod reduce;
mod solution;
mod transform;

pub use antiderivative::{kozlov_variable_scalar, Antiderivative, Quadrature};
pub use reduce::{
    pushforward, rectification_check, reduce_sequence, reduce_step, Rectification, ReducedSystem,
    ReductionChain, StepOutcome,
};
pub use solution::{integrate_scalar, CompiledSolution, SolutionForm};
pub use transform::{
    bcomp_check, ito_preservation_check, transform_ito, transform_w, BcompReport, Preservation,
};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{is_identically_zero, Context, Expr, VarId, ZeroTestConfig, ZeroVerdict};
use crate::sde::SdeError;
use crate::symmetry::SymmetryError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KozlovError {
    #[error("phi vanishes identically; no Kozlov variable")]
    ZeroPhi,
    #[error("operation needs a scalar equation (n = m = 1)")]
    NotScalar,
    #[error("change of variables is missing its {0} map")]
    MissingMap(&'static str),
    #[error("{0}")]
    WrongWienerMap(&'static str),
    #[error("supplied inverse map does not invert the forward map")]
    BadInverse,
    #[error("Jacobian is singular at every sample point")]
    SingularJacobian,
    #[error("wiener map R is not conformal: {0}")]
    NotConformal(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("vector field is not rectified by the given coordinates")]
    NotRectified,
    #[error("vector field is not a symmetry of the system")]
    NotSymmetry,
    #[error("coefficients depend on the state: {0}")]
    StateDependent(String),
    #[error("generator order violates the derived series: {0}")]
    BadOrdering(String),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// How the Wiener coordinates transform.
#[derive(Clone, Debug, PartialEq)]
pub enum WienerPart {
    Identity,
    /// Constant linear map (`w = R z` on the old-of-new side).
    Linear(DMatrix<f64>),
    /// Arbitrary expressions.
    General(Vec<Expr>),
}

/// One side of a coordinate change: the target coordinates as expressions
/// in the source coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordMap {
    pub state: Vec<Expr>,
    pub wiener: WienerPart,
}

impl CoordMap {
    pub fn new(state: Vec<Expr>, wiener: WienerPart) -> Self {
        CoordMap {
            state: state.iter().map(Expr::simplified).collect(),
            wiener: match wiener {
                WienerPart::General(v) => WienerPart::General(v.iter().map(Expr::simplified).collect()),
                other => other,
            },
        }
    }

    /// Wiener-side expressions for `m` processes.
    pub fn wiener_exprs(&self, m: usize) -> Vec<Expr> {
        match &self.wiener {
            WienerPart::Identity => (0..m).map(Expr::wiener).collect(),
            WienerPart::Linear(r) => (0..r.nrows())
                .map(|k| {
                    Expr::sum((0..r.ncols()).filter(|&j| r[(k, j)] != 0.0).map(|j| {
                        Expr::real(r[(k, j)]) * Expr::wiener(j)
                    }))
                    .simplified()
                })
                .collect(),
            WienerPart::General(v) => v.clone(),
        }
    }

    /// All coordinates: states followed by Wiener components.
    pub fn all(&self, m: usize) -> Vec<Expr> {
        let mut v = self.state.clone();
        v.extend(self.wiener_exprs(m));
        v
    }

    /// Substitutes this map into `e` (which lives in the target coordinates).
    pub fn pull(&self, e: &Expr, m: usize) -> Expr {
        let w = self.wiener_exprs(m);
        e.substitute_with(&|v| match v {
            VarId::State(i) => self.state.get(i).cloned(),
            VarId::Wiener(k) => w.get(k).cloned(),
            VarId::Time => None,
        })
        .simplified()
    }
}

/// A change of variables between old `(x, t, w)` and new `(y, t, z)`
/// coordinates. Either side may be missing; whatever is present is checked
/// for consistency when both are.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeOfVariables {
    pub old_ctx: Context,
    pub new_ctx: Context,
    /// `y = Psi(x,t,w)`, `z = ...`; expressions over `old_ctx`.
    pub new_of_old: Option<CoordMap>,
    /// `x = Phi(y,t,z)`, `w = ...`; expressions over `new_ctx`.
    pub old_of_new: Option<CoordMap>,
}

impl ChangeOfVariables {
    /// Plain state map `y = Psi(x,t,w)` with optional inverse `x = Theta(y,t,w)`.
    pub fn random_map(old_ctx: Context, new_ctx: Context, forward: Vec<Expr>, inverse: Option<Vec<Expr>>) -> Self {
        ChangeOfVariables {
            old_ctx,
            new_ctx,
            new_of_old: Some(CoordMap::new(forward, WienerPart::Identity)),
            old_of_new: inverse.map(|v| CoordMap::new(v, WienerPart::Identity)),
        }
    }

    pub fn identity(ctx: &Context) -> Self {
        let states: Vec<Expr> = (0..ctx.n).map(Expr::state).collect();
        ChangeOfVariables::random_map(ctx.clone(), ctx.clone(), states.clone(), Some(states))
    }

    /// Jacobian `M^i_j = d(target^i)/d(source^j)` of the primary state map
    /// (old-of-new when present, as in the W-transformation).
    pub fn jacobian(&self) -> Option<Vec<Vec<Expr>>> {
        let map = self.old_of_new.as_ref().or(self.new_of_old.as_ref())?;
        let n = map.state.len();
        Some(
            map.state
                .iter()
                .map(|p| (0..n).map(|j| p.diff(VarId::State(j))).collect())
                .collect(),
        )
    }

    /// `M Lambda - I`, zero-tested entrywise.
    pub fn check_inverse_jacobian(&self, cfg: &ZeroTestConfig) -> Option<ZeroVerdict> {
        let ctx = if self.old_of_new.is_some() {
            &self.new_ctx
        } else {
            &self.old_ctx
        };
        let m = self.jacobian()?;
        let lam = symbolic_inverse(&m)?;
        let n = m.len();
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut t: Vec<Expr> = (0..n).map(|k| &m[i][k] * &lam[k][j]).collect();
                if i == j {
                    t.push(Expr::int(-1));
                }
                v.push(is_identically_zero(&Expr::sum(t), ctx, cfg));
            }
        }
        Some(crate::symmetry::combine_zero(&v))
    }
}

/// Determinant by cofactor expansion (fine for the small systems here).
pub fn symbolic_det(a: &[Vec<Expr>]) -> Expr {
    let n = a.len();
    match n {
        0 => Expr::one(),
        1 => a[0][0].clone(),
        2 => (&a[0][0] * &a[1][1] - &a[0][1] * &a[1][0]).simplified(),
        _ => {
            let mut t = Vec::new();
            for (c, lead) in a[0].iter().enumerate() {
                if lead.is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Expr>> = a[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != c)
                            .map(|(_, e)| e.clone())
                            .collect()
                    })
                    .collect();
                let sign = if c % 2 == 0 { Expr::one() } else { Expr::int(-1) };
                t.push(sign * lead * symbolic_det(&minor));
            }
            Expr::sum(t).simplified()
        }
    }
}

/// Adjugate over determinant. `None` when the determinant simplifies to 0.
pub fn symbolic_inverse(a: &[Vec<Expr>]) -> Option<Vec<Vec<Expr>>> {
    let n = a.len();
    let det = symbolic_det(a);
    if det.is_zero() {
        return None;
    }
    let inv_det = det.recip();
    if n == 1 {
        return Some(vec![vec![inv_det.simplified()]]);
    }
    let mut out = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<Expr>> = (0..n)
                .filter(|&r| r != i)
                .map(|r| (0..n).filter(|&c| c != j).map(|c| a[r][c].clone()).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { Expr::one() } else { Expr::int(-1) };
            // transpose of the cofactor matrix
            out[j][i] = (sign * symbolic_det(&minor) * &inv_det).simplified();
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Driving {
    Wiener,
    Transformed(String),
}

/// An SDE whose coefficients may depend on the driving processes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralSde {
    #[serde(skip)]
    pub ctx: Context,
    #[serde(skip)]
    pub drift: Vec<Expr>,
    #[serde(skip)]
    pub diffusion: Vec<Vec<Expr>>,
    pub drift_text: Vec<String>,
    pub diffusion_text: Vec<Vec<String>>,
    pub driving: Driving,
    /// True when the coefficients are written in the new variables.
    pub in_new_variables: bool,
    /// Zero verdict for the dependence of all coefficients on the driving variables.
    pub ito_like: ZeroVerdict,
}

impl GeneralSde {
    pub(crate) fn build(
        ctx: Context,
        drift: Vec<Expr>,
        diffusion: Vec<Vec<Expr>>,
        driving: Driving,
        in_new_variables: bool,
        ito_like: ZeroVerdict,
    ) -> Self {
        let drift: Vec<Expr> = drift.iter().map(Expr::simplified).collect();
        let diffusion: Vec<Vec<Expr>> = diffusion
            .iter()
            .map(|r| r.iter().map(Expr::simplified).collect())
            .collect();
        GeneralSde {
            drift_text: drift.iter().map(|e| e.display(&ctx).to_string()).collect(),
            diffusion_text: diffusion
                .iter()
                .map(|r| r.iter().map(|e| e.display(&ctx).to_string()).collect())
                .collect(),
            ctx,
            drift,
            diffusion,
            driving,
            in_new_variables,
            ito_like,
        }
    }

    pub fn is_ito_like(&self) -> bool {
        self.ito_like.is_zero() && self.driving == Driving::Wiener
    }

    /// Zero verdict for dependence of all coefficients on `v`.
    pub fn independent_of(&self, v: VarId, cfg: &ZeroTestConfig) -> ZeroVerdict {
        let d: Vec<Expr> = self
            .drift
            .iter()
            .chain(self.diffusion.iter().flatten())
            .map(|e| e.diff(v))
            .collect();
        crate::symmetry::combine_zero(&crate::symmetry::zero_tests(&d, &self.ctx, cfg))
    }

    /// Converts back to an Ito system when the coefficients are free of the
    /// driving variables.
    pub fn to_ito(&self) -> Result<crate::sde::ItoSystem, KozlovError> {
        if !self.is_ito_like() {
            return Err(KozlovError::WrongWienerMap("equation is not of Ito type"));
        }
        // w-dependence may survive structurally even when it cancels numerically
        let clean = |e: &Expr| {
            e.substitute_with(&|v| matches!(v, VarId::Wiener(_)).then(Expr::zero))
                .simplified()
        };
        let f = self.drift.iter().map(clean).collect();
        let s = self.diffusion.iter().map(|r| r.iter().map(clean).collect()).collect();
        Ok(crate::sde::ItoSystem::new(self.ctx.clone(), f, s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn inverse_of_rotation_jacobian() {
        let ctx = Context::new(2, 2).unwrap().with_state_names(&["r", "th"]).unwrap();
        let p = |s: &str| parse(s, &ctx).unwrap();
        let cov = ChangeOfVariables {
            old_ctx: Context::new(2, 2).unwrap(),
            new_ctx: ctx.clone(),
            new_of_old: None,
            old_of_new: Some(CoordMap::new(vec![p("r*cos(th)"), p("r*sin(th)")], WienerPart::Identity)),
        };
        assert!(cov.check_inverse_jacobian(&ZeroTestConfig::default()).unwrap().is_zero());
        let a = vec![vec![p("r"), p("th")], vec![p("2*r"), p("2*th")]];
        assert!(symbolic_inverse(&a).is_none());
    }
}
