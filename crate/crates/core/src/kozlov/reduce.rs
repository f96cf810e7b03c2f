//! Reduction of an Ito system by rectified symmetries, one generator at a time.

use serde::Serialize;

use super::transform::{transform_ito, transform_w};
use super::{ChangeOfVariables, CoordMap, Driving, GeneralSde, KozlovError, WienerPart};
use crate::expr::{Context, Expr, VarId, ZeroTestConfig, ZeroVerdict};
use crate::sde::{Diffusion, ItoSystem};
use crate::symmetry::{
    combine_zero, linear_w_matrix, residual_standard_ito, residual_w_ito, solvability_check,
    zero_tests, Noise, ResidualOptions, Solvability, Verdict, VectorField,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rectification {
    /// `X(coordinate)` for every new coordinate, states first.
    pub images: Vec<String>,
    /// Zero-test of `X(coordinate) - delta(coordinate, target)`.
    pub verdicts: Vec<ZeroVerdict>,
    pub target: usize,
    pub rectified: bool,
}

/// Checks that `X` reads `d/d(coordinate target)` in the new coordinates,
/// given as expressions in the old ones. Missing Wiener coordinates are the
/// old `w` unchanged.
pub fn rectification_check(
    x: &VectorField,
    new_vars: &CoordMap,
    target: usize,
    ctx: &Context,
    cfg: &ZeroTestConfig,
) -> Rectification {
    let coords = new_vars.all(ctx.m);
    let images: Vec<Expr> = coords.iter().map(|c| x.apply(c)).collect();
    let shifted: Vec<Expr> = images
        .iter()
        .enumerate()
        .map(|(i, e)| if i == target { e - Expr::one() } else { e.clone() })
        .collect();
    let verdicts = zero_tests(&shifted, ctx, cfg);
    let rectified = target < coords.len() && verdicts.iter().all(ZeroVerdict::is_zero);
    Rectification {
        images: images.iter().map(|e| e.display(ctx).to_string()).collect(),
        verdicts,
        target,
        rectified,
    }
}

/// `X` written in the new coordinates of `cov` (both maps required).
pub fn pushforward(
    x: &VectorField,
    cov: &ChangeOfVariables,
    cfg: &ZeroTestConfig,
) -> Result<VectorField, KozlovError> {
    let fwd = cov.new_of_old.as_ref().ok_or(KozlovError::MissingMap("new-of-old"))?;
    let inv = cov.old_of_new.as_ref().ok_or(KozlovError::MissingMap("old-of-new"))?;
    let (n, m) = (cov.new_ctx.n, cov.new_ctx.m);
    let comps: Vec<Expr> = fwd
        .all(cov.old_ctx.m)
        .iter()
        .map(|c| inv.pull(&x.apply(c), m))
        .collect();
    if comps.len() != n + m {
        return Err(KozlovError::Dimension(format!(
            "map has {} coordinates, expected {}",
            comps.len(),
            n + m
        )));
    }
    let phi = comps[..n].to_vec();
    let h = comps[n..].to_vec();
    let out = if matches!(x.noise, Noise::None) && h.iter().all(Expr::is_zero) {
        VectorField::simple(phi)
    } else if let Some(r) = linear_w_matrix(&h, &cov.new_ctx, cfg) {
        VectorField::linear_w(phi, r)
    } else {
        VectorField::general_h(phi, h)
    };
    Ok(out.with_tau(x.tau.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedSystem {
    pub symmetry: Verdict,
    pub rectification: Rectification,
    /// The full transformed equation.
    pub transformed: GeneralSde,
    pub target: usize,
    /// Zero verdict for the dependence of every coefficient on the target coordinate.
    pub independent: ZeroVerdict,
    /// The remaining `n - 1` equations, when the target is a state coordinate
    /// and the coefficients do not depend on it.
    pub block: Option<GeneralSde>,
    /// Index of the reconstruction equation in `transformed`.
    pub reconstruction: Option<usize>,
}

fn symmetry_verdict(sys: &ItoSystem, x: &VectorField, opts: &ResidualOptions) -> Result<Verdict, KozlovError> {
    let report = match x.noise {
        Noise::None => residual_standard_ito(x, sys, opts)?,
        _ => residual_w_ito(x, sys, opts)?,
    };
    Ok(report.verdict)
}

fn drop_state(sde: &GeneralSde, target: usize) -> Result<GeneralSde, KozlovError> {
    let (n, m) = (sde.ctx.n, sde.ctx.m);
    let names: Vec<&str> = (0..n).filter(|&i| i != target).map(|i| sde.ctx.state_name(i)).collect();
    let ctx = sde
        .ctx
        .respecified(n - 1, m)
        .and_then(|c| c.with_state_names(&names))
        .and_then(|c| c.with_wiener_names(sde.ctx.wiener_names()))
        .map_err(|e| KozlovError::Dimension(e.to_string()))?;
    let renumber = |e: &Expr| {
        e.substitute_with(&|v| match v {
            VarId::State(j) if j == target => Some(Expr::zero()),
            VarId::State(j) if j > target => Some(Expr::state(j - 1)),
            _ => None,
        })
        .simplified()
    };
    let keep = |i: &usize| *i != target;
    let drift: Vec<Expr> = (0..n).filter(keep).map(|i| renumber(&sde.drift[i])).collect();
    let diffusion: Vec<Vec<Expr>> = (0..n)
        .filter(keep)
        .map(|i| sde.diffusion[i].iter().map(renumber).collect())
        .collect();
    let d: Vec<Expr> = (0..m)
        .flat_map(|k| drift.iter().chain(diffusion.iter().flatten()).map(move |e| e.diff(VarId::Wiener(k))))
        .collect();
    let ito_like = combine_zero(&zero_tests(&d, &ctx, &ZeroTestConfig::default()));
    Ok(GeneralSde::build(ctx, drift, diffusion, sde.driving.clone(), true, ito_like))
}

/// One reduction step: verify `X`, check that `cov` rectifies it along
/// coordinate `target` (states first, then Wiener coordinates), transform,
/// and split off the reconstruction equation.
pub fn reduce_step(
    sys: &ItoSystem,
    x: &VectorField,
    cov: &ChangeOfVariables,
    target: usize,
    opts: &ResidualOptions,
) -> Result<ReducedSystem, KozlovError> {
    let cfg = &opts.zero;
    let (n, m) = (sys.n(), sys.m());
    if target >= n + m {
        return Err(KozlovError::Dimension(format!("target {target} out of range")));
    }
    let symmetry = symmetry_verdict(sys, x, opts)?;
    if matches!(symmetry, Verdict::NotSymmetry { .. }) {
        return Err(KozlovError::NotSymmetry);
    }
    let fwd = cov.new_of_old.as_ref().ok_or(KozlovError::MissingMap("new-of-old"))?;
    let rectification = rectification_check(x, fwd, target, sys.ctx(), cfg);
    if !rectification.rectified {
        return Err(KozlovError::NotRectified);
    }
    let random_map = fwd.wiener == WienerPart::Identity
        && cov.old_of_new.as_ref().is_none_or(|inv| inv.wiener == WienerPart::Identity);
    let transformed = if random_map {
        transform_ito(sys, cov, cfg)?
    } else {
        transform_w(sys, cov, cfg)?
    };
    let independent = if transformed.in_new_variables {
        let v = if target < n { VarId::State(target) } else { VarId::Wiener(target - n) };
        transformed.independent_of(v, cfg)
    } else {
        // X is d/d(target), so X annihilates whatever does not depend on it
        let d: Vec<Expr> = transformed
            .drift
            .iter()
            .chain(transformed.diffusion.iter().flatten())
            .map(|e| x.apply(e))
            .collect();
        combine_zero(&zero_tests(&d, sys.ctx(), cfg))
    };
    let block = if target < n && n > 1 && transformed.in_new_variables && independent.is_zero() {
        Some(drop_state(&transformed, target)?)
    } else {
        None
    };
    Ok(ReducedSystem {
        symmetry,
        rectification,
        transformed,
        target,
        independent,
        block,
        reconstruction: (target < n).then_some(target),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    Reduced(Box<ReducedSystem>),
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionChain {
    pub steps: Vec<StepOutcome>,
    pub completed: bool,
    pub aborted: Option<String>,
}

/// `[X_i, X_j]` may only involve generators after `min(i, j)`, so that the
/// tail `X_q, ..., X_r` spans the q-th derived algebra.
fn check_order(gens: &[VectorField], ctx: &Context, cfg: &ZeroTestConfig) -> Result<(), KozlovError> {
    if gens.len() < 2 {
        return Ok(());
    }
    let c = match solvability_check(gens, ctx, cfg)? {
        Solvability::Solvable { constants, .. } => constants.0,
        Solvability::NotSolvable { .. } => {
            return Err(KozlovError::BadOrdering("the generators do not span a solvable algebra".into()))
        }
        Solvability::Inconclusive { reason } => return Err(KozlovError::BadOrdering(reason)),
    };
    for (i, ci) in c.iter().enumerate() {
        for (j, cij) in ci.iter().enumerate() {
            for (k, v) in cij.iter().enumerate() {
                if v.abs() > 1e-9 && k <= i.min(j) {
                    return Err(KozlovError::BadOrdering(format!(
                        "[X{}, X{}] has a component along X{}",
                        i + 1,
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Sequential reduction. After each step the remaining generators are
/// pushed forward and re-verified on the new equation; the chain stops as
/// soon as an intermediate equation is not of Ito type or a step fails.
pub fn reduce_sequence(
    sys: &ItoSystem,
    generators: &[VectorField],
    covs: &[ChangeOfVariables],
    targets: &[usize],
    opts: &ResidualOptions,
) -> Result<ReductionChain, KozlovError> {
    if generators.len() != covs.len() || generators.len() != targets.len() {
        return Err(KozlovError::Dimension(
            "need one change of variables and one target per generator".into(),
        ));
    }
    check_order(generators, sys.ctx(), &opts.zero)?;
    let mut steps = Vec::new();
    let mut current = sys.clone();
    let mut gens = generators.to_vec();
    let abort = |steps: Vec<StepOutcome>, reason: String| ReductionChain {
        steps,
        completed: false,
        aborted: Some(reason),
    };
    for q in 0..gens.len() {
        let red = match reduce_step(&current, &gens[q], &covs[q], targets[q], opts) {
            Ok(r) => r,
            Err(e) => {
                let reason = format!("step {}: {e}", q + 1);
                steps.push(StepOutcome::Failed { reason: reason.clone() });
                return Ok(abort(steps, reason));
            }
        };
        let next = if q + 1 < gens.len() {
            if !red.transformed.is_ito_like() {
                let reason = format!(
                    "step {}: reduced equation is not of Ito type; the next symmetry cannot be re-verified",
                    q + 1
                );
                steps.push(StepOutcome::Reduced(Box::new(red)));
                return Ok(abort(steps, reason));
            }
            Some(red.transformed.to_ito())
        } else {
            None
        };
        steps.push(StepOutcome::Reduced(Box::new(red)));
        if let Some(next) = next {
            current = match next {
                Ok(s) => s,
                Err(e) => return Ok(abort(steps, format!("step {}: {e}", q + 1))),
            };
            for g in gens.iter_mut().skip(q + 1) {
                *g = match pushforward(g, &covs[q], &opts.zero) {
                    Ok(p) => p,
                    Err(e) => return Ok(abort(steps, format!("step {}: {e}", q + 1))),
                };
            }
        }
    }
    Ok(ReductionChain {
        steps,
        completed: true,
        aborted: None,
    })
}

impl ReducedSystem {
    /// True when the transformed equation is driven by genuine Wiener processes
    /// and has coefficients free of them.
    pub fn is_ito(&self) -> bool {
        self.transformed.is_ito_like() && self.transformed.driving == Driving::Wiener
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ParamValue};
    use nalgebra::DMatrix;

    #[test]
    fn scaling_rectification() {
        let ctx = Context::scalar();
        let p = |s: &str| parse(s, &ctx).unwrap();
        let x = VectorField::linear_w(vec![p("x")], DMatrix::identity(1, 1));
        let cfg = ZeroTestConfig::default();
        let alone = CoordMap::new(vec![p("log(x)")], WienerPart::Identity);
        assert!(!rectification_check(&x, &alone, 0, &ctx, &cfg).rectified);
        let pair = CoordMap::new(vec![p("log(x)")], WienerPart::General(vec![p("w/x")]));
        assert!(rectification_check(&x, &pair, 0, &ctx, &cfg).rectified);
    }

    #[test]
    fn example_two_step() {
        let ctx = Context::scalar();
        let p = |s: &str| parse(s, &ctx).unwrap();
        let sys = ItoSystem::new(ctx.clone(), vec![p("exp(x)")], vec![vec![p("1")]]).unwrap();
        let x = VectorField::simple(vec![p("exp(x - w)")]);
        let cov = ChangeOfVariables::random_map(ctx.clone(), ctx.clone(), vec![p("-exp(w - x)")], Some(vec![p("w - log(-x)")]));
        let opts = ResidualOptions::default();
        let red = reduce_step(&sys, &x, &cov, 0, &opts).unwrap();
        assert!(red.independent.is_zero());
        assert!(!red.is_ito());
        assert_eq!(red.reconstruction, Some(0));
        let chain = reduce_sequence(&sys, &[x], &[cov], &[0], &opts).unwrap();
        assert!(chain.completed);
    }

    #[test]
    fn linear_planar_chain_runs_stepwise() {
        // dx_i = lam x_i dt + mu dw_i; X1 scales everything, X4 rotates both planes
        let ctx = Context::new(2, 2)
            .unwrap()
            .with_param("lam", ParamValue::Numeric(-0.5))
            .unwrap()
            .with_param("mu", ParamValue::Numeric(0.3))
            .unwrap();
        let p = |s: &str| parse(s, &ctx).unwrap();
        let sys = ItoSystem::new(
            ctx.clone(),
            vec![p("lam*x1"), p("lam*x2")],
            vec![vec![p("mu"), p("0")], vec![p("0"), p("mu")]],
        )
        .unwrap();
        let x1 = VectorField::linear_w(vec![p("x1"), p("x2")], DMatrix::identity(2, 2));
        let x4 = VectorField::linear_w(
            vec![p("x2"), p("-x1")],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        );
        let cov = ChangeOfVariables {
            old_ctx: ctx.clone(),
            new_ctx: ctx.clone(),
            new_of_old: Some(CoordMap::new(
                vec![p("log(x1)"), p("x2/x1")],
                WienerPart::General(vec![p("w1/x1"), p("w2/x1")]),
            )),
            old_of_new: Some(CoordMap::new(
                vec![p("exp(x1)"), p("x2*exp(x1)")],
                WienerPart::General(vec![p("w1*exp(x1)"), p("w2*exp(x1)")]),
            )),
        };
        let opts = ResidualOptions::default();
        let chain = reduce_sequence(&sys, &[x1, x4], &[cov.clone(), cov], &[0, 1], &opts).unwrap();
        let StepOutcome::Reduced(first) = &chain.steps[0] else {
            panic!("first step failed: {:?}", chain.steps[0])
        };
        assert!(first.independent.is_zero());
        assert!(!first.transformed.is_ito_like());
        assert!(!chain.completed);
        assert_eq!(chain.steps.len(), 1);
    }
}
