//! Coefficients of an Ito system after a random change of variables or a
//! W-map, and the tests telling whether the result is again of Ito type.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{symbolic_det, symbolic_inverse, ChangeOfVariables, Driving, GeneralSde, KozlovError, WienerPart};
use crate::expr::{is_identically_zero, Context, Expr, VarId, ZeroTestConfig, ZeroVerdict};
use crate::sde::{misawa_l0, misawa_lk, Diffusion, ItoSystem};
use crate::symmetry::{combine_zero, conformal_check, zero_tests, Conformal};

fn w_independence(drift: &[Expr], diffusion: &[Vec<Expr>], ctx: &Context, cfg: &ZeroTestConfig) -> ZeroVerdict {
    let d: Vec<Expr> = (0..ctx.m)
        .flat_map(|k| {
            drift
                .iter()
                .chain(diffusion.iter().flatten())
                .map(move |e| e.diff(VarId::Wiener(k)))
        })
        .collect();
    combine_zero(&zero_tests(&d, ctx, cfg))
}

fn singular(det: &Expr, ctx: &Context, cfg: &ZeroTestConfig) -> bool {
    det.is_zero() || is_identically_zero(det, ctx, cfg).is_zero()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreservationEntry {
    pub state: usize,
    pub wiener: usize,
    /// `L0(dhat_m Phi^i)`.
    pub l0: ZeroVerdict,
    /// `L_k(dhat_m Phi^i)` for every k.
    pub lk: Vec<ZeroVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Preservation {
    pub entries: Vec<PreservationEntry>,
    pub preserved: ZeroVerdict,
}

/// Misawa test: the map keeps Ito form iff every `dhat_m Phi^i` lies in the
/// kernel of `L0` and of all `L_k`.
pub fn ito_preservation_check(
    sys: &ItoSystem,
    cov: &ChangeOfVariables,
    cfg: &ZeroTestConfig,
) -> Result<Preservation, KozlovError> {
    let fwd = cov.new_of_old.as_ref().ok_or(KozlovError::MissingMap("new-of-old"))?;
    let (n, m) = (sys.n(), sys.m());
    if fwd.state.len() != n {
        return Err(KozlovError::Dimension(format!("map has {} components, n = {n}", fwd.state.len())));
    }
    let mut entries = Vec::new();
    for (i, p) in fwd.state.iter().enumerate() {
        for mm in 0..m {
            let u = p.diff(VarId::Wiener(mm)).simplified();
            let (l0, lk) = if u.is_zero() {
                let z = ZeroVerdict::Zero { mode: crate::expr::ZeroMode::Structural };
                (z.clone(), vec![z; m])
            } else {
                let mut exprs = vec![misawa_l0(&u, sys)];
                for k in 0..m {
                    exprs.push(misawa_lk(&u, sys, k)?);
                }
                let mut v = zero_tests(&exprs, sys.ctx(), cfg);
                let l0 = v.remove(0);
                (l0, v)
            };
            entries.push(PreservationEntry { state: i, wiener: mm, l0, lk });
        }
    }
    let all: Vec<ZeroVerdict> = entries
        .iter()
        .flat_map(|e| std::iter::once(e.l0.clone()).chain(e.lk.iter().cloned()))
        .collect();
    Ok(Preservation {
        preserved: combine_zero(&all),
        entries,
    })
}

/// New coefficients under `y = Phi(x,t,w)` with the Wiener coordinates
/// unchanged: `F = L0 Phi`, `S_k = L_k Phi`. Expressed in `(y,t,w)` when the
/// inverse map is supplied, otherwise left in the old variables.
pub fn transform_ito(
    sys: &ItoSystem,
    cov: &ChangeOfVariables,
    cfg: &ZeroTestConfig,
) -> Result<GeneralSde, KozlovError> {
    let fwd = cov.new_of_old.as_ref().ok_or(KozlovError::MissingMap("new-of-old"))?;
    if fwd.wiener != WienerPart::Identity {
        return Err(KozlovError::WrongWienerMap(
            "random maps keep the Wiener coordinates; use transform_w for W-maps",
        ));
    }
    let (n, m) = (sys.n(), sys.m());
    if fwd.state.len() != n {
        return Err(KozlovError::Dimension(format!("map has {} components, n = {n}", fwd.state.len())));
    }
    let jac: Vec<Vec<Expr>> = fwd
        .state
        .iter()
        .map(|p| (0..n).map(|j| p.diff(VarId::State(j))).collect())
        .collect();
    if singular(&symbolic_det(&jac), sys.ctx(), cfg) {
        return Err(KozlovError::SingularJacobian);
    }
    let drift: Vec<Expr> = fwd.state.iter().map(|p| misawa_l0(p, sys)).collect();
    let diffusion = fwd
        .state
        .iter()
        .map(|p| (0..m).map(|k| misawa_lk(p, sys, k)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;

    match &cov.old_of_new {
        Some(inv) => {
            if inv.wiener != WienerPart::Identity || inv.state.len() != n {
                return Err(KozlovError::WrongWienerMap("inverse of a random map must keep w"));
            }
            // the supplied inverse has to actually invert the forward map
            let back: Vec<Expr> = fwd
                .state
                .iter()
                .enumerate()
                .map(|(i, p)| inv.pull(p, m) - Expr::state(i))
                .collect();
            if !combine_zero(&zero_tests(&back, &cov.new_ctx, cfg)).is_zero() {
                return Err(KozlovError::BadInverse);
            }
            let drift: Vec<Expr> = drift.iter().map(|e| inv.pull(e, m)).collect();
            let diffusion: Vec<Vec<Expr>> = diffusion
                .iter()
                .map(|r| r.iter().map(|e| inv.pull(e, m)).collect())
                .collect();
            let ito_like = w_independence(&drift, &diffusion, &cov.new_ctx, cfg);
            Ok(GeneralSde::build(cov.new_ctx.clone(), drift, diffusion, Driving::Wiener, true, ito_like))
        }
        None => {
            let ito_like = ito_preservation_check(sys, cov, cfg)?.preserved;
            Ok(GeneralSde::build(sys.ctx().clone(), drift, diffusion, Driving::Wiener, false, ito_like))
        }
    }
}

/// Quadratic covariation of the new driving coordinates.
fn driving_covariation(wiener: &WienerPart, m: usize) -> Result<DMatrix<f64>, KozlovError> {
    match wiener {
        WienerPart::Linear(r) => {
            if let Conformal::Rejected { reason } = conformal_check(r) {
                return Err(KozlovError::NotConformal(reason));
            }
            let ri = r.clone().try_inverse().ok_or(KozlovError::SingularJacobian)?;
            Ok(&ri * ri.transpose())
        }
        // general maps: the new coordinates are formally treated as unit Wiener processes
        _ => Ok(DMatrix::identity(m, m)),
    }
}

/// Coefficients of `dy = F dt + S dz` under `x = Phi(y,t,z)`, `w = Omega(y,t,z)`.
///
/// With `N = M - sigma Omega_y` and `B = sigma Omega_z - Phi_z` the diffusion
/// is `S = N^{-1} B`; the drift is `F = N^{-1} (f - Phi_t - D2 Phi/2 +
/// sigma (Omega_t + D2 Omega/2))`, `D2` being the second-order Ito term in
/// `(y, z)`.
pub fn transform_w(
    sys: &ItoSystem,
    cov: &ChangeOfVariables,
    cfg: &ZeroTestConfig,
) -> Result<GeneralSde, KozlovError> {
    let inv = cov.old_of_new.as_ref().ok_or(KozlovError::MissingMap("old-of-new"))?;
    let (n, m) = (sys.n(), sys.m());
    let ctx = &cov.new_ctx;
    if inv.state.len() != n || ctx.n != n || ctx.m != m {
        return Err(KozlovError::Dimension(format!(
            "W-map must preserve (n, m) = ({n}, {m})"
        )));
    }
    let c = driving_covariation(&inv.wiener, m)?;
    let phi = &inv.state;
    let omega = inv.wiener_exprs(m);
    if omega.len() != m {
        return Err(KozlovError::Dimension(format!("Wiener map has {} components, m = {m}", omega.len())));
    }
    let pull = |e: &Expr| {
        e.substitute_with(&|v| match v {
            VarId::State(i) => Some(phi[i].clone()),
            _ => None,
        })
        .simplified()
    };
    let f: Vec<Expr> = sys.f().iter().map(pull).collect();
    let sg: Vec<Vec<Expr>> = sys.sigma().iter().map(|r| r.iter().map(pull).collect()).collect();
    let dy = |e: &Expr, j: usize| e.diff(VarId::State(j));
    let dz = |e: &Expr, a: usize| e.diff(VarId::Wiener(a));

    let nmat: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut t = vec![dy(&phi[i], j)];
                    for k in 0..m {
                        t.push(-(&sg[i][k] * dy(&omega[k], j)));
                    }
                    Expr::sum(t).simplified()
                })
                .collect()
        })
        .collect();
    if singular(&symbolic_det(&nmat), ctx, cfg) {
        return Err(KozlovError::SingularJacobian);
    }
    let ninv = symbolic_inverse(&nmat).ok_or(KozlovError::SingularJacobian)?;
    let b: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|a| {
                    let mut t: Vec<Expr> = (0..m).map(|k| &sg[i][k] * dz(&omega[k], a)).collect();
                    t.push(-dz(&phi[i], a));
                    Expr::sum(t).simplified()
                })
                .collect()
        })
        .collect();
    let s: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|a| Expr::sum((0..n).map(|j| &ninv[i][j] * &b[j][a])).simplified())
                .collect()
        })
        .collect();

    let d2 = |u: &Expr| -> Expr {
        let mut t = Vec::new();
        for a in 0..m {
            for bb in 0..m {
                let cab = c[(a, bb)];
                if cab == 0.0 {
                    continue;
                }
                let mut inner = Vec::new();
                for j in 0..n {
                    let uj = dy(u, j);
                    if uj.is_zero() {
                        continue;
                    }
                    for l in 0..n {
                        inner.push(dy(&uj, l) * &s[j][a] * &s[l][bb]);
                    }
                    inner.push(Expr::int(2) * dz(&uj, bb) * &s[j][a]);
                }
                inner.push(dz(&dz(u, a), bb));
                t.push(Expr::real(cab) * Expr::sum(inner));
            }
        }
        Expr::sum(t).simplified()
    };

    let half = || Expr::rational(1, 2);
    let drift_rhs: Vec<Expr> = (0..n)
        .map(|i| {
            let mut t = vec![f[i].clone(), -phi[i].diff(VarId::Time), -(half() * d2(&phi[i]))];
            for k in 0..m {
                t.push(&sg[i][k] * (omega[k].diff(VarId::Time) + half() * d2(&omega[k])));
            }
            Expr::sum(t).simplified()
        })
        .collect();
    let drift: Vec<Expr> = (0..n)
        .map(|i| Expr::sum((0..n).map(|j| &ninv[i][j] * &drift_rhs[j])).simplified())
        .collect();

    let ito_like = w_independence(&drift, &s, ctx, cfg);
    let driving = match inv.wiener {
        WienerPart::General(_) => Driving::Transformed(
            "w = Omega(y,t,z); z treated as a unit-covariance driving process".into(),
        ),
        _ => Driving::Wiener,
    };
    Ok(GeneralSde::build(ctx.clone(), drift, s, driving, true, ito_like))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BcompReport {
    pub gamma: String,
    pub lhs: String,
    pub rhs: String,
    #[serde(skip)]
    pub lhs_expr: Expr,
    #[serde(skip)]
    pub rhs_expr: Expr,
    /// Zero-test of `lhs - rhs`.
    pub verdict: ZeroVerdict,
}

impl BcompReport {
    pub fn compatible(&self) -> bool {
        self.verdict.is_zero()
    }
}

/// Compatibility relation for a scalar random symmetry `phi d_y`, with
/// `gamma = d_w (1/phi)`:
/// `S gamma_t + S_t gamma = F gamma_w + (S gamma_ww + S^2 gamma_yw)/2`.
pub fn bcomp_check(sys: &ItoSystem, phi: &Expr, cfg: &ZeroTestConfig) -> Result<BcompReport, KozlovError> {
    if sys.n() != 1 || sys.m() != 1 {
        return Err(KozlovError::NotScalar);
    }
    let ctx = sys.ctx();
    if phi.is_zero() || is_identically_zero(phi, ctx, cfg).is_zero() {
        return Err(KozlovError::ZeroPhi);
    }
    let (y, t, w) = (VarId::State(0), VarId::Time, VarId::Wiener(0));
    let f = &sys.f()[0];
    let s = &sys.sigma()[0][0];
    let gamma = phi.clone().recip().diff(w).simplified();
    let lhs = (s * gamma.diff(t) + s.diff(t) * &gamma).simplified();
    let rhs = (f * gamma.diff(w)
        + Expr::rational(1, 2) * (s * gamma.diff(w).diff(w) + s * s * gamma.diff(y).diff(w)))
    .simplified();
    let verdict = is_identically_zero(&(&lhs - &rhs), ctx, cfg);
    Ok(BcompReport {
        gamma: gamma.display(ctx).to_string(),
        lhs: lhs.display(ctx).to_string(),
        rhs: rhs.display(ctx).to_string(),
        lhs_expr: lhs,
        rhs_expr: rhs,
        verdict,
    })
}
