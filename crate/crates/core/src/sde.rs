//! Ito and Stratonovich systems, the Ito Laplacian, Misawa operators and
//! the drift correction relating the two calculi.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{evaluate, Context, EvalError, Expr, VarId, ZeroTestConfig};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SdeError {
    #[error("drift has {got} components, expected n = {n}")]
    DriftDimension { n: usize, got: usize },
    #[error("diffusion matrix is {rows}x{cols}, expected {n}x{m}")]
    DiffusionDimension {
        n: usize,
        m: usize,
        rows: usize,
        cols: usize,
    },
    #[error("coefficient {0} depends on a Wiener variable")]
    WienerDependence(String),
    #[error("coefficient {0} uses a variable outside the declared dimensions")]
    VariableOutOfRange(String),
    #[error("Wiener index {k} out of range (m = {m})")]
    WienerIndex { k: usize, m: usize },
    #[error("expression has wrong dimensions for this system")]
    Dimension,
}

/// Drift and diffusion shared by both calculi. `sigma[i][k]`: row `i` is
/// the state, column `k` the Wiener process.
#[derive(Clone, Debug, PartialEq)]
struct Coefficients {
    ctx: Context,
    drift: Vec<Expr>,
    sigma: Vec<Vec<Expr>>,
}

impl Coefficients {
    fn new(ctx: Context, drift: Vec<Expr>, sigma: Vec<Vec<Expr>>) -> Result<Self, SdeError> {
        let (n, m) = (ctx.n, ctx.m);
        if drift.len() != n {
            return Err(SdeError::DriftDimension { n, got: drift.len() });
        }
        if sigma.len() != n || sigma.iter().any(|r| r.len() != m) {
            return Err(SdeError::DiffusionDimension {
                n,
                m,
                rows: sigma.len(),
                cols: sigma.first().map_or(0, Vec::len),
            });
        }
        let named = drift
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("f{}", i + 1), e))
            .chain(sigma.iter().enumerate().flat_map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(move |(k, e)| (format!("sigma_{}_{}", i + 1, k + 1), e))
            }));
        for (name, e) in named {
            for v in e.free_vars() {
                match v {
                    VarId::Wiener(_) => return Err(SdeError::WienerDependence(name)),
                    VarId::State(i) if i >= n => return Err(SdeError::VariableOutOfRange(name)),
                    _ => {}
                }
            }
        }
        let drift = drift.iter().map(Expr::simplified).collect();
        let sigma = sigma
            .iter()
            .map(|r| r.iter().map(Expr::simplified).collect())
            .collect();
        Ok(Coefficients { ctx, drift, sigma })
    }
}

/// `dx^i = f^i(x,t) dt + sigma^i_k(x,t) dw^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ItoSystem(Coefficients);

/// `dx^i = b^i(x,t) dt + sigma^i_k(x,t) o dw^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StratSystem(Coefficients);

/// Read access to the diffusion part, common to both calculi.
pub trait Diffusion {
    fn ctx(&self) -> &Context;
    fn sigma(&self) -> &[Vec<Expr>];
    fn drift(&self) -> &[Expr];

    fn n(&self) -> usize {
        self.ctx().n
    }

    fn m(&self) -> usize {
        self.ctx().m
    }

    fn sigma_at(&self, i: usize, k: usize) -> &Expr {
        &self.sigma()[i][k]
    }
}

macro_rules! impl_diffusion {
    ($t:ty) => {
        impl Diffusion for $t {
            fn ctx(&self) -> &Context {
                &self.0.ctx
            }
            fn sigma(&self) -> &[Vec<Expr>] {
                &self.0.sigma
            }
            fn drift(&self) -> &[Expr] {
                &self.0.drift
            }
        }
    };
}

impl_diffusion!(ItoSystem);
impl_diffusion!(StratSystem);

impl ItoSystem {
    pub fn new(ctx: Context, f: Vec<Expr>, sigma: Vec<Vec<Expr>>) -> Result<Self, SdeError> {
        Coefficients::new(ctx, f, sigma).map(ItoSystem)
    }

    pub fn f(&self) -> &[Expr] {
        &self.0.drift
    }

    pub fn to_strat(&self) -> StratSystem {
        ito_to_strat(self)
    }

    /// Same system with parameters replaced by expressions (usually numbers).
    pub fn map_exprs(&self, ctx: Context, map: &dyn Fn(&Expr) -> Expr) -> Result<Self, SdeError> {
        let (f, s) = map_coefficients(&self.0, map);
        ItoSystem::new(ctx, f, s)
    }
}

impl StratSystem {
    pub fn new(ctx: Context, b: Vec<Expr>, sigma: Vec<Vec<Expr>>) -> Result<Self, SdeError> {
        Coefficients::new(ctx, b, sigma).map(StratSystem)
    }

    pub fn b(&self) -> &[Expr] {
        &self.0.drift
    }

    pub fn to_ito(&self) -> ItoSystem {
        strat_to_ito(self)
    }

    pub fn map_exprs(&self, ctx: Context, map: &dyn Fn(&Expr) -> Expr) -> Result<Self, SdeError> {
        let (b, s) = map_coefficients(&self.0, map);
        StratSystem::new(ctx, b, s)
    }
}

fn map_coefficients(c: &Coefficients, map: &dyn Fn(&Expr) -> Expr) -> (Vec<Expr>, Vec<Vec<Expr>>) {
    (
        c.drift.iter().map(map).collect(),
        c.sigma.iter().map(|r| r.iter().map(map).collect()).collect(),
    )
}

/// `(sigma sigma^T)^{jl}`.
pub fn diffusion_tensor<S: Diffusion + ?Sized>(sys: &S) -> Vec<Vec<Expr>> {
    let (n, m) = (sys.n(), sys.m());
    (0..n)
        .map(|j| {
            (0..n)
                .map(|l| {
                    Expr::sum((0..m).map(|k| sys.sigma_at(j, k) * sys.sigma_at(l, k)))
                        .simplified()
                })
                .collect()
        })
        .collect()
}

/// Ito Laplacian:
/// `sum_k d2u/dw_k^2 + (sigma sigma^T)^{jl} d_j d_l u + 2 sigma^{jk} d_j dhat_k u`.
pub fn ito_laplacian<S: Diffusion + ?Sized>(u: &Expr, sys: &S) -> Expr {
    let (n, m) = (sys.n(), sys.m());
    let a = diffusion_tensor(sys);
    let mut terms = Vec::new();
    for k in 0..m {
        let wk = VarId::Wiener(k);
        terms.push(u.diff(wk).diff(wk));
    }
    for j in 0..n {
        let uj = u.diff(VarId::State(j));
        if uj.is_zero() {
            continue;
        }
        for (l, a_jl) in a[j].iter().enumerate() {
            if !a_jl.is_zero() {
                terms.push(a_jl * uj.diff(VarId::State(l)));
            }
        }
        for k in 0..m {
            let s = sys.sigma_at(j, k);
            if !s.is_zero() {
                terms.push(Expr::int(2) * s * uj.diff(VarId::Wiener(k)));
            }
        }
    }
    Expr::sum(terms).simplified()
}

/// `rho^i = 1/2 (d_k sigma^{ij}) sigma^{kj}`; Ito drift = Stratonovich drift + rho.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftCorrection {
    pub rho: Vec<Expr>,
}

pub fn drift_correction<S: Diffusion + ?Sized>(sys: &S) -> DriftCorrection {
    let (n, m) = (sys.n(), sys.m());
    let rho = (0..n)
        .map(|i| {
            let mut terms = Vec::new();
            for j in 0..m {
                for k in 0..n {
                    let d = sys.sigma_at(i, j).diff(VarId::State(k));
                    if !d.is_zero() {
                        terms.push(d * sys.sigma_at(k, j));
                    }
                }
            }
            (Expr::rational(1, 2) * Expr::sum(terms)).simplified()
        })
        .collect();
    DriftCorrection { rho }
}

pub fn ito_to_strat(sys: &ItoSystem) -> StratSystem {
    let rho = drift_correction(sys).rho;
    let b = sys.f().iter().zip(&rho).map(|(f, r)| (f - r).simplified()).collect();
    StratSystem::new(sys.ctx().clone(), b, sys.sigma().to_vec()).expect("same shape")
}

pub fn strat_to_ito(sys: &StratSystem) -> ItoSystem {
    let rho = drift_correction(sys).rho;
    let f = sys.b().iter().zip(&rho).map(|(b, r)| (b + r).simplified()).collect();
    ItoSystem::new(sys.ctx().clone(), f, sys.sigma().to_vec()).expect("same shape")
}

/// `L0 u = d_t u + f^j d_j u + 1/2 Laplacian(u)`.
pub fn misawa_l0(u: &Expr, sys: &ItoSystem) -> Expr {
    let mut terms = vec![u.diff(VarId::Time), Expr::rational(1, 2) * ito_laplacian(u, sys)];
    for (j, f) in sys.f().iter().enumerate() {
        terms.push(f * u.diff(VarId::State(j)));
    }
    Expr::sum(terms).simplified()
}

/// `Lk u = dhat_k u + sigma^j_k d_j u`.
pub fn misawa_lk<S: Diffusion + ?Sized>(u: &Expr, sys: &S, k: usize) -> Result<Expr, SdeError> {
    if k >= sys.m() {
        return Err(SdeError::WienerIndex { k, m: sys.m() });
    }
    let mut terms = vec![u.diff(VarId::Wiener(k))];
    for j in 0..sys.n() {
        terms.push(sys.sigma_at(j, k) * u.diff(VarId::State(j)));
    }
    Ok(Expr::sum(terms).simplified())
}

/// Rank of the diffusion matrix at the sample points of `cfg` (for
/// information only; nothing requires non-degeneracy).
pub fn diffusion_rank_samples<S: Diffusion + ?Sized>(
    sys: &S,
    cfg: &ZeroTestConfig,
    count: usize,
) -> Result<Vec<usize>, EvalError> {
    let ctx = sys.ctx();
    let params = ctx.numeric_params();
    let dim = ctx.n + 1;
    let pts = crate::expr::halton_points(dim, count, cfg.seed);
    let lerp = |(a, b): (f64, f64), u: f64| a + (b - a) * u;
    pts.iter()
        .map(|u| {
            let x: Vec<f64> = (0..ctx.n).map(|i| lerp(cfg.sampling.state, u[i])).collect();
            let point = crate::expr::Point::new(x, lerp(cfg.sampling.time, u[ctx.n]), vec![0.0; ctx.m]);
            let mut mat = DMatrix::zeros(ctx.n, ctx.m);
            for i in 0..ctx.n {
                for k in 0..ctx.m {
                    mat[(i, k)] = evaluate(sys.sigma_at(i, k), &point, &params)?;
                }
            }
            Ok(mat.rank(1e-10))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{is_identically_zero, parse, ParamValue};

    fn scalar(f: &str, s: &str, ctx: &Context) -> ItoSystem {
        ItoSystem::new(
            ctx.clone(),
            vec![parse(f, ctx).unwrap()],
            vec![vec![parse(s, ctx).unwrap()]],
        )
        .unwrap()
    }

    fn params() -> Context {
        Context::scalar()
            .with_param("lambda", ParamValue::Symbolic)
            .unwrap()
            .with_param("mu", ParamValue::Symbolic)
            .unwrap()
            .with_param("alpha", ParamValue::Symbolic)
            .unwrap()
    }

    #[test]
    fn rejects_wiener_dependent_coefficients() {
        let ctx = Context::scalar();
        let r = ItoSystem::new(
            ctx.clone(),
            vec![parse("x*w", &ctx).unwrap()],
            vec![vec![Expr::one()]],
        );
        assert_eq!(r, Err(SdeError::WienerDependence("f1".into())));
        let r = ItoSystem::new(ctx, vec![Expr::one(), Expr::one()], vec![vec![Expr::one()]]);
        assert!(matches!(r, Err(SdeError::DriftDimension { .. })));
    }

    #[test]
    fn laplacian_examples() {
        let ctx = params();
        let sys = scalar("lambda*x", "1", &ctx);
        assert!(ito_laplacian(&Expr::param("mu"), &sys).is_zero());
        assert!(ito_laplacian(&parse("3*w", &ctx).unwrap(), &sys).is_zero());
        assert!(ito_laplacian(&parse("exp(x - w)", &ctx).unwrap(), &sys).is_zero());
    }

    #[test]
    fn drift_correction_power_law() {
        let ctx = params();
        let sys = scalar("lambda*x", "mu*x^alpha", &ctx);
        let rho = drift_correction(&sys).rho;
        let expected = parse("(1/2)*alpha*mu^2*x^(2*alpha - 1)", &ctx).unwrap();
        let cfg = ZeroTestConfig::default();
        assert!(is_identically_zero(&(&rho[0] - &expected), &ctx, &cfg).is_zero());
        let back = sys.to_strat().to_ito();
        assert!(is_identically_zero(&(&back.f()[0] - &sys.f()[0]), &ctx, &cfg).is_zero());
    }

    #[test]
    fn misawa_examples() {
        let ctx = params();
        let sys = scalar("lambda*x", "mu", &ctx);
        assert_eq!(misawa_l0(&Expr::state(0), &sys), parse("lambda*x", &ctx).unwrap().simplified());
        assert!(misawa_lk(&parse("w - x/mu", &ctx).unwrap(), &sys, 0).unwrap().is_zero());
        assert!(misawa_lk(&Expr::one(), &sys, 1).is_err());
    }
}
