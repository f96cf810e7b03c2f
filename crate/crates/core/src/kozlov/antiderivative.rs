//! `Phi(y) = int dy / phi(y)` for scalar generators.

use std::collections::BTreeMap;

use super::KozlovError;
use crate::expr::{
    is_identically_zero, Context, EvalError, Expr, Node, Number, Program, VarId, ZeroTestConfig,
};

/// Numeric antiderivative `y -> int_{base}^{y} integrand(s, t, w) ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub integrand: Expr,
    pub base: f64,
    pub params: BTreeMap<String, f64>,
}

impl Quadrature {
    pub fn eval(&self, y: f64, t: f64, w: &[f64]) -> Result<f64, EvalError> {
        let prog = Program::compile(&self.integrand, &self.params)?;
        let out = quadrature::double_exponential::integrate(
            |s| prog.eval(&[s], t, w),
            self.base,
            y,
            1e-12,
        );
        if out.integral.is_finite() {
            Ok(out.integral)
        } else {
            Err(EvalError::Domain("quadrature did not converge".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Antiderivative {
    /// Closed form from the table, derivative checked against `1/phi`.
    Closed(Expr),
    Quadrature(Quadrature),
}

impl Antiderivative {
    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Antiderivative::Closed(e) => Some(e),
            Antiderivative::Quadrature(_) => None,
        }
    }

    /// `d Phi / dy`, symbolic in both cases.
    pub fn derivative(&self) -> Expr {
        match self {
            Antiderivative::Closed(e) => e.diff(VarId::State(0)).simplified(),
            Antiderivative::Quadrature(q) => q.integrand.clone(),
        }
    }

    pub fn eval(&self, y: f64, t: f64, w: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        match self {
            Antiderivative::Closed(e) => Program::compile(e, params).map(|p| p.eval(&[y], t, w)),
            Antiderivative::Quadrature(q) => q.eval(y, t, w),
        }
    }
}

/// `coeff * y^power * exp(rate * y)`, with coeff and rate free of y.
#[derive(Default)]
struct Monomial {
    power: Option<Number>,
    rate: Vec<Expr>,
    coeff: Vec<Expr>,
}

fn collect(e: &Expr, k: Number, acc: &mut Monomial) -> bool {
    let y = VarId::State(0);
    if !e.depends_on(y) {
        acc.coeff.push(Expr::pow(e.clone(), Expr::number(k)));
        return true;
    }
    match e.node() {
        Node::Var(v) if *v == y => {
            let p = acc.power.unwrap_or(Number::int(0));
            acc.power = Some(p.add(k));
            true
        }
        Node::Neg(a) => {
            if k.as_integer().is_none() {
                return false;
            }
            acc.coeff.push(Expr::pow(Expr::int(-1), Expr::number(k)));
            collect(a, k, acc)
        }
        Node::Product(fs) => fs.iter().all(|f| collect(f, k, acc)),
        Node::Pow(b, c) => match c.as_number() {
            Some(c) => collect(b, k.mul(c), acc),
            None => false,
        },
        Node::Apply(crate::expr::Func::Exp, arg) => {
            let d = arg.diff(y).simplified();
            if d.depends_on(y) {
                return false;
            }
            let rest = (arg - &d * Expr::state(0)).simplified();
            if rest.depends_on(y) {
                return false;
            }
            acc.rate.push(Expr::number(k) * d);
            acc.coeff.push((Expr::number(k) * rest).exp());
            true
        }
        _ => false,
    }
}

fn table(g: &Expr) -> Option<Expr> {
    let mut acc = Monomial::default();
    if !collect(g, Number::int(1), &mut acc) {
        return None;
    }
    let a = acc.power.unwrap_or(Number::int(0));
    let b = Expr::sum(acc.rate).simplified();
    let c = Expr::product(acc.coeff);
    let y = Expr::state(0);
    let out = match (a.is_zero(), b.is_zero()) {
        (true, true) => c * y,
        (false, true) if a.add(Number::int(1)).is_zero() => c * y.log(),
        (false, true) => {
            let a1 = a.add(Number::int(1));
            c * Expr::pow(y, Expr::number(a1)) * Expr::number(a1.recip()?)
        }
        (true, false) => c * (&b * y).exp() * b.recip(),
        (false, false) => return None,
    };
    Some(out.simplified())
}

/// Kozlov variable of the scalar generator `phi d_y`.
pub fn kozlov_variable_scalar(
    phi: &Expr,
    ctx: &Context,
    cfg: &ZeroTestConfig,
) -> Result<Antiderivative, KozlovError> {
    if ctx.n != 1 {
        return Err(KozlovError::NotScalar);
    }
    if phi.is_zero() || is_identically_zero(phi, ctx, cfg).is_zero() {
        return Err(KozlovError::ZeroPhi);
    }
    let g = phi.clone().recip().simplified();
    if let Some(cand) = table(&g) {
        let check = cand.diff(VarId::State(0)) - &g;
        if is_identically_zero(&check, ctx, cfg).is_zero() {
            return Ok(Antiderivative::Closed(cand));
        }
    }
    let (lo, hi) = cfg.sampling.range(VarId::State(0));
    Ok(Antiderivative::Quadrature(Quadrature {
        integrand: g,
        base: 0.5 * (lo + hi),
        params: ctx.numeric_params(),
    }))
}
