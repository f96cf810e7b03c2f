use rayon::prelude::*;
use serde::Serialize;

use super::{conformal_check, Conformal, Noise, SymmetryError, VectorField};
use crate::expr::{
    is_identically_zero, Context, Expr, VarId, Witness, ZeroMode, ZeroTestConfig, ZeroVerdict,
};
use crate::sde::{ito_laplacian, Diffusion, ItoSystem, StratSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Calculus {
    Ito,
    Stratonovich,
}

#[derive(Clone, Debug, Default)]
pub struct ResidualOptions {
    pub zero: ZeroTestConfig,
    /// Evaluate residuals even for a non-conformal `R`.
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Symmetry,
    NotSymmetry { witness: Witness },
    Inconclusive,
}

impl Verdict {
    pub fn is_symmetry(&self) -> bool {
        matches!(self, Verdict::Symmetry)
    }

    pub(crate) fn combine<'a>(verdicts: impl IntoIterator<Item = &'a ZeroVerdict>) -> Verdict {
        let mut inconclusive = false;
        for v in verdicts {
            match v {
                ZeroVerdict::NonZero { witness } => {
                    return Verdict::NotSymmetry {
                        witness: (**witness).clone(),
                    }
                }
                ZeroVerdict::Inconclusive { .. } => inconclusive = true,
                ZeroVerdict::Zero { .. } => {}
            }
        }
        if inconclusive {
            Verdict::Inconclusive
        } else {
            Verdict::Symmetry
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    /// `[i]` for the drift family, `[i, k]` for the diffusion family (zero-based).
    pub index: Vec<usize>,
    pub text: String,
    #[serde(skip)]
    pub expr: Expr,
    pub zero: ZeroVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyReport {
    pub name: String,
    pub residuals: Vec<Residual>,
    pub verdict: Verdict,
    pub structural: usize,
    pub sampled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub calculus: Calculus,
    pub families: Vec<FamilyReport>,
    pub verdict: Verdict,
    pub conformal: Option<Conformal>,
}

impl SymmetryReport {
    pub fn family(&self, name: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.name == name)
    }

    pub fn is_symmetry(&self) -> bool {
        self.verdict.is_symmetry()
    }
}

pub fn zero_tests(exprs: &[Expr], ctx: &Context, cfg: &ZeroTestConfig) -> Vec<ZeroVerdict> {
    exprs
        .par_iter()
        .map(|e| is_identically_zero(e, ctx, cfg))
        .collect()
}

fn family(name: &str, entries: Vec<(Vec<usize>, Expr)>, ctx: &Context, cfg: &ZeroTestConfig) -> FamilyReport {
    let exprs: Vec<Expr> = entries.iter().map(|(_, e)| e.clone()).collect();
    let verdicts = zero_tests(&exprs, ctx, cfg);
    let verdict = Verdict::combine(&verdicts);
    let count = |mode| {
        verdicts
            .iter()
            .filter(|v| matches!(v, ZeroVerdict::Zero { mode: m } if *m == mode))
            .count()
    };
    let (structural, sampled) = (count(ZeroMode::Structural), count(ZeroMode::Sampled));
    let residuals = entries
        .into_iter()
        .zip(verdicts)
        .map(|((index, expr), zero)| Residual {
            index,
            text: expr.display(ctx).to_string(),
            expr,
            zero,
        })
        .collect();
    FamilyReport {
        name: name.into(),
        residuals,
        verdict,
        structural,
        sampled,
    }
}

/// `u^j d_j v` for a vector `u`.
fn along(u: &[Expr], v: &Expr) -> Expr {
    Expr::sum(
        u.iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| c * v.diff(VarId::State(j))),
    )
}

/// Diffusion family, identical for both calculi:
/// `dhat_k phi^i + sigma^j_k d_j phi^i - phi^j d_j sigma^i_k
///  - sigma^i_m (dhat_k h^m + sigma^j_k d_j h^m)`.
pub(crate) fn diffusion_family<S: Diffusion + ?Sized>(phi: &[Expr], h: &[Expr], sys: &S) -> Vec<Vec<Expr>> {
    let (n, m) = (sys.n(), sys.m());
    let col = |k: usize| -> Vec<Expr> { (0..n).map(|j| sys.sigma_at(j, k).clone()).collect() };
    (0..n)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let sk = col(k);
                    let mut t = vec![
                        phi[i].diff(VarId::Wiener(k)),
                        along(&sk, &phi[i]),
                        -along(phi, sys.sigma_at(i, k)),
                    ];
                    for (mm, hm) in h.iter().enumerate() {
                        let s = sys.sigma_at(i, mm);
                        if s.is_zero() || hm.is_zero() {
                            continue;
                        }
                        t.push(-(s * (hm.diff(VarId::Wiener(k)) + along(&sk, hm))));
                    }
                    Expr::sum(t).simplified()
                })
                .collect()
        })
        .collect()
}

/// Ito drift family:
/// `d_t phi + f^j d_j phi - phi^j d_j f + 1/2 Lap(phi) - sigma^i_k (d_t h^k + f^j d_j h^k + 1/2 Lap(h^k))`.
pub(crate) fn ito_drift_family(phi: &[Expr], h: &[Expr], sys: &ItoSystem) -> Vec<Expr> {
    let f = sys.f();
    let l0 = |u: &Expr| -> Expr {
        if u.is_zero() {
            return Expr::zero();
        }
        u.diff(VarId::Time) + along(f, u) + Expr::rational(1, 2) * ito_laplacian(u, sys)
    };
    let lh: Vec<Expr> = h.iter().map(l0).collect();
    (0..sys.n())
        .map(|i| {
            let mut t = vec![l0(&phi[i]), -along(phi, &f[i])];
            for (k, l) in lh.iter().enumerate() {
                if !l.is_zero() {
                    t.push(-(sys.sigma_at(i, k) * l));
                }
            }
            Expr::sum(t).simplified()
        })
        .collect()
}

/// Stratonovich drift family:
/// `d_t phi + b^j d_j phi - phi^j d_j b - sigma^i_k (d_t h^k + b^j d_j h^k)`.
pub(crate) fn strat_drift_family(phi: &[Expr], h: &[Expr], sys: &StratSystem) -> Vec<Expr> {
    let b = sys.b();
    let d = |u: &Expr| -> Expr { u.diff(VarId::Time) + along(b, u) };
    let dh: Vec<Expr> = h.iter().map(d).collect();
    (0..sys.n())
        .map(|i| {
            let mut t = vec![d(&phi[i]), -along(phi, &b[i])];
            for (k, l) in dh.iter().enumerate() {
                if !l.is_zero() {
                    t.push(-(sys.sigma_at(i, k) * l));
                }
            }
            Expr::sum(t).simplified()
        })
        .collect()
}

fn precheck(
    x: &VectorField,
    ctx: &Context,
    opts: &ResidualOptions,
    want_noise: bool,
) -> Result<Option<Conformal>, SymmetryError> {
    x.check_dims(ctx)?;
    if !is_identically_zero(&x.tau, ctx, &opts.zero).is_zero() {
        return Err(SymmetryError::NotSimple);
    }
    match (&x.noise, want_noise) {
        (Noise::None, true) => Err(SymmetryError::WrongNoiseKind(
            "W-symmetry equations need a noise part (h or R)",
        )),
        (Noise::None, false) => Ok(None),
        (_, false) => Err(SymmetryError::WrongNoiseKind(
            "standard determining equations take a field without noise part",
        )),
        (Noise::GeneralH(_), true) => Ok(None),
        (Noise::LinearW(r), true) => {
            let c = conformal_check(r);
            if let Conformal::Rejected { reason } = &c {
                if !opts.force {
                    return Err(SymmetryError::NotConformal(reason.clone()));
                }
            }
            Ok(Some(c))
        }
    }
}

fn report(
    calculus: Calculus,
    drift: Vec<Expr>,
    diffusion: Vec<Vec<Expr>>,
    ctx: &Context,
    opts: &ResidualOptions,
    conformal: Option<Conformal>,
) -> SymmetryReport {
    let d1 = drift.into_iter().enumerate().map(|(i, e)| (vec![i], e)).collect();
    let d2 = diffusion
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| row.into_iter().enumerate().map(move |(k, e)| (vec![i, k], e)))
        .collect();
    let families = vec![
        family("drift", d1, ctx, &opts.zero),
        family("diffusion", d2, ctx, &opts.zero),
    ];
    let verdict = Verdict::combine(families.iter().flat_map(|f| f.residuals.iter().map(|r| &r.zero)));
    SymmetryReport {
        calculus,
        families,
        verdict,
        conformal,
    }
}

/// Determining equations for a simple standard (deterministic or random)
/// symmetry of an Ito system.
pub fn residual_standard_ito(
    x: &VectorField,
    sys: &ItoSystem,
    opts: &ResidualOptions,
) -> Result<SymmetryReport, SymmetryError> {
    precheck(x, sys.ctx(), opts, false)?;
    let h = vec![Expr::zero(); sys.m()];
    let drift = ito_drift_family(&x.phi, &h, sys);
    let diffusion = diffusion_family(&x.phi, &h, sys);
    Ok(report(Calculus::Ito, drift, diffusion, sys.ctx(), opts, None))
}

/// W-symmetry determining equations for an Ito system, for linear or general `h`.
pub fn residual_w_ito(
    x: &VectorField,
    sys: &ItoSystem,
    opts: &ResidualOptions,
) -> Result<SymmetryReport, SymmetryError> {
    let conformal = precheck(x, sys.ctx(), opts, true)?;
    let h = x.h(sys.m());
    let drift = ito_drift_family(&x.phi, &h, sys);
    let diffusion = diffusion_family(&x.phi, &h, sys);
    Ok(report(Calculus::Ito, drift, diffusion, sys.ctx(), opts, conformal))
}

/// W-symmetry determining equations for a Stratonovich system.
pub fn residual_w_strat(
    x: &VectorField,
    sys: &StratSystem,
    opts: &ResidualOptions,
) -> Result<SymmetryReport, SymmetryError> {
    let conformal = precheck(x, sys.ctx(), opts, true)?;
    let h = x.h(sys.m());
    let drift = strat_drift_family(&x.phi, &h, sys);
    let diffusion = diffusion_family(&x.phi, &h, sys);
    Ok(report(Calculus::Stratonovich, drift, diffusion, sys.ctx(), opts, conformal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ParamValue};
    use nalgebra::DMatrix;

    fn scalar(ctx: &Context, f: &str, s: &str) -> ItoSystem {
        ItoSystem::new(ctx.clone(), vec![parse(f, ctx).unwrap()], vec![vec![parse(s, ctx).unwrap()]]).unwrap()
    }

    fn lm(ctx: Context) -> Context {
        ctx.with_param("lambda", ParamValue::Symbolic)
            .unwrap()
            .with_param("mu", ParamValue::Symbolic)
            .unwrap()
    }

    #[test]
    fn example_one_and_two_standard() {
        let ctx = Context::scalar().with_state_names(&["y"]).unwrap();
        let sys = scalar(&ctx, "exp(-y) - (1/2)*exp(-2*y)", "exp(-y)");
        let x = VectorField::simple(vec![parse("exp(-y)", &ctx).unwrap()]);
        let r = residual_standard_ito(&x, &sys, &ResidualOptions::default()).unwrap();
        assert!(r.is_symmetry(), "{:#?}", r);

        let ctx = Context::scalar();
        let sys = scalar(&ctx, "exp(x)", "1");
        let x = VectorField::simple(vec![parse("exp(x - w)", &ctx).unwrap()]);
        assert!(residual_standard_ito(&x, &sys, &ResidualOptions::default()).unwrap().is_symmetry());
        let zero = VectorField::simple(vec![Expr::zero()]);
        let r = residual_standard_ito(&zero, &sys, &ResidualOptions::default()).unwrap();
        assert_eq!(r.families[0].structural + r.families[1].structural, 2);
    }

    #[test]
    fn example_three_both_calculi() {
        let ctx = lm(Context::scalar());
        let sys = scalar(&ctx, "lambda*x", "mu");
        let x = VectorField::linear_w(vec![Expr::state(0)], DMatrix::identity(1, 1));
        let o = ResidualOptions::default();
        assert!(residual_w_ito(&x, &sys, &o).unwrap().is_symmetry());
        assert!(residual_w_strat(&x, &sys.to_strat(), &o).unwrap().is_symmetry());
    }

    #[test]
    fn noise_kind_and_time_are_checked() {
        let ctx = Context::scalar();
        let sys = scalar(&ctx, "x", "1");
        let o = ResidualOptions::default();
        let w = VectorField::linear_w(vec![Expr::state(0)], DMatrix::identity(1, 1));
        assert!(matches!(residual_standard_ito(&w, &sys, &o), Err(SymmetryError::WrongNoiseKind(_))));
        let s = VectorField::simple(vec![Expr::state(0)]);
        assert!(residual_w_ito(&s, &sys, &o).is_err());
        let t = VectorField::simple(vec![Expr::zero()]).with_tau(Expr::one());
        assert_eq!(residual_standard_ito(&t, &sys, &o), Err(SymmetryError::NotSimple));
    }

    #[test]
    fn rejected_r_needs_force() {
        let ctx = Context::new(2, 2).unwrap();
        let sys = ItoSystem::new(
            ctx.clone(),
            vec![Expr::state(0), Expr::state(1)],
            vec![vec![Expr::one(), Expr::zero()], vec![Expr::zero(), Expr::one()]],
        )
        .unwrap();
        let x = VectorField::linear_w(
            vec![Expr::state(0), -Expr::state(1)],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        );
        assert!(matches!(
            residual_w_ito(&x, &sys, &ResidualOptions::default()),
            Err(SymmetryError::NotConformal(_))
        ));
        let forced = ResidualOptions {
            force: true,
            ..Default::default()
        };
        let r = residual_w_ito(&x, &sys, &forced).unwrap();
        assert!(r.is_symmetry());
        assert!(!r.conformal.unwrap().is_admissible());
    }
}
