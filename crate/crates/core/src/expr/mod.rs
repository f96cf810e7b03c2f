//! Symbolic expressions over state, time and Wiener variables.
//!
//! An [`Expr`] is an immutable, reference-counted tree. Cloning is cheap and
//! trees can be shared freely between threads. Structural equality and
//! hashing look through the pointer, so two independently built trees that
//! print the same compare equal.
//!
//! The engine is deliberately small: exact rational constants, the handful
//! of transcendental functions the SDE examples need, a rewriting
//! simplifier that folds constants and merges like terms, and a
//! sampling-based zero test for everything the simplifier cannot decide.

mod compile;
mod context;
mod diff;
mod eval;
mod number;
mod parse;
mod print;
mod simplify;
pub mod special;
mod zero;

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use compile::Program;
pub use context::{Context, ContextError, ParamValue};
pub use diff::{differentiate, Differentiator};
pub use eval::{evaluate, evaluate_with_magnitude, EvalError, Point};
pub use number::Number;
pub use parse::{parse, ParseError};
pub use print::Displayed;
pub use simplify::simplify;
pub use zero::{halton_points, is_identically_zero, SamplingBox, Witness, ZeroMode, ZeroTestConfig, ZeroVerdict};

/// A coordinate of the extended space `(x, t, w)`. Indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarId {
    State(usize),
    Time,
    Wiener(usize),
}

/// Builtin scalar functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Arctan,
    /// Exponential integral, principal value.
    Ei,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sin,
        Func::Cos,
        Func::Arctan,
        Func::Ei,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Arctan => "arctan",
            Func::Ei => "Ei",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "arctan" | "atan" => Func::Arctan,
            "Ei" => Func::Ei,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Const(Number),
    Var(VarId),
    Param(Arc<str>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Expr, Expr),
    Neg(Expr),
    Apply(Func, Expr),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(Arc<Node>);

impl Expr {
    /// Wraps a node verbatim, without any normalisation.
    pub fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn int(v: i64) -> Expr {
        Expr::number(Number::int(v))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::number(Number::rational(num, den))
    }

    pub fn float(v: f64) -> Expr {
        Expr::number(Number::Float(v))
    }

    /// A constant for a real value, kept exact when it is a short fraction.
    pub fn real(v: f64) -> Expr {
        Expr::number(Number::from_f64_exact(v))
    }

    pub fn number(n: Number) -> Expr {
        Expr::from_node(Node::Const(n))
    }

    pub fn var(v: VarId) -> Expr {
        Expr::from_node(Node::Var(v))
    }

    pub fn state(i: usize) -> Expr {
        Expr::var(VarId::State(i))
    }

    pub fn wiener(k: usize) -> Expr {
        Expr::var(VarId::Wiener(k))
    }

    pub fn time() -> Expr {
        Expr::var(VarId::Time)
    }

    pub fn param(name: &str) -> Expr {
        Expr::from_node(Node::Param(Arc::from(name)))
    }

    pub fn as_number(&self) -> Option<Number> {
        match self.node() {
            Node::Const(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_number().is_some_and(|n| n.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_number().is_some_and(|n| n.is_one())
    }

    /// Sum with light normalisation: zeros dropped, nested sums flattened.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out = Vec::new();
        for t in terms {
            match t.node() {
                Node::Sum(inner) => out.extend(inner.iter().cloned()),
                _ if t.is_zero() => {}
                _ => out.push(t),
            }
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Sum(out)),
        }
    }

    /// Product with light normalisation: ones dropped, any zero factor wins.
    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out = Vec::new();
        for f in factors {
            if f.is_zero() {
                return Expr::zero();
            }
            match f.node() {
                Node::Product(inner) => out.extend(inner.iter().cloned()),
                _ if f.is_one() => {}
                _ => out.push(f),
            }
        }
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Product(out)),
        }
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return base;
        }
        Expr::from_node(Node::Pow(base, exponent))
    }

    pub fn powi(self, k: i64) -> Expr {
        Expr::pow(self, Expr::int(k))
    }

    pub fn recip(self) -> Expr {
        Expr::pow(self, Expr::int(-1))
    }

    pub fn apply(f: Func, arg: Expr) -> Expr {
        Expr::from_node(Node::Apply(f, arg))
    }

    pub fn exp(self) -> Expr {
        Expr::apply(Func::Exp, self)
    }

    pub fn log(self) -> Expr {
        Expr::apply(Func::Log, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::apply(Func::Sqrt, self)
    }

    pub fn sin(self) -> Expr {
        Expr::apply(Func::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::apply(Func::Cos, self)
    }

    pub fn arctan(self) -> Expr {
        Expr::apply(Func::Arctan, self)
    }

    pub fn ei(self) -> Expr {
        Expr::apply(Func::Ei, self)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Param(_) => Vec::new(),
            Node::Sum(v) | Node::Product(v) => v.iter().collect(),
            Node::Pow(b, e) => vec![b, e],
            Node::Neg(a) | Node::Apply(_, a) => vec![a],
        }
    }

    pub fn depends_on(&self, v: VarId) -> bool {
        match self.node() {
            Node::Var(u) => *u == v,
            Node::Const(_) | Node::Param(_) => false,
            _ => self.children().into_iter().any(|c| c.depends_on(v)),
        }
    }

    pub fn depends_on_any(&self, vars: &[VarId]) -> bool {
        vars.iter().any(|v| self.depends_on(*v))
    }

    pub fn free_vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match self.node() {
            Node::Var(v) => {
                out.insert(*v);
            }
            _ => self.children().into_iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Param(p) => {
                out.insert(p.to_string());
            }
            _ => self.children().into_iter().for_each(|c| c.collect_params(out)),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Expr::depth)
            .max()
            .unwrap_or(0)
    }

    /// Capture-free substitution of a single variable.
    pub fn substitute(&self, v: VarId, replacement: &Expr) -> Expr {
        self.substitute_with(&|u| (u == v).then(|| replacement.clone()))
    }

    /// Simultaneous substitution: every variable for which `map` returns a
    /// replacement is swapped in one pass, so replacements are never
    /// rewritten again.
    pub fn substitute_with(&self, map: &dyn Fn(VarId) -> Option<Expr>) -> Expr {
        match self.node() {
            Node::Var(u) => map(*u).unwrap_or_else(|| self.clone()),
            Node::Const(_) | Node::Param(_) => self.clone(),
            Node::Sum(v) => Expr::from_node(Node::Sum(
                v.iter().map(|c| c.substitute_with(map)).collect(),
            )),
            Node::Product(v) => Expr::from_node(Node::Product(
                v.iter().map(|c| c.substitute_with(map)).collect(),
            )),
            Node::Pow(b, e) => Expr::from_node(Node::Pow(b.substitute_with(map), e.substitute_with(map))),
            Node::Neg(a) => Expr::from_node(Node::Neg(a.substitute_with(map))),
            Node::Apply(f, a) => Expr::from_node(Node::Apply(*f, a.substitute_with(map))),
        }
    }

    /// Replaces named parameters by expressions.
    pub fn substitute_params(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self.node() {
            Node::Param(p) => map(p).unwrap_or_else(|| self.clone()),
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Sum(v) => Expr::from_node(Node::Sum(
                v.iter().map(|c| c.substitute_params(map)).collect(),
            )),
            Node::Product(v) => Expr::from_node(Node::Product(
                v.iter().map(|c| c.substitute_params(map)).collect(),
            )),
            Node::Pow(b, e) => {
                Expr::from_node(Node::Pow(b.substitute_params(map), e.substitute_params(map)))
            }
            Node::Neg(a) => Expr::from_node(Node::Neg(a.substitute_params(map))),
            Node::Apply(f, a) => Expr::from_node(Node::Apply(*f, a.substitute_params(map))),
        }
    }

    pub fn diff(&self, v: VarId) -> Expr {
        differentiate(self, v)
    }

    pub fn simplified(&self) -> Expr {
        simplify(self)
    }

    pub fn display<'a>(&'a self, ctx: &'a Context) -> Displayed<'a> {
        Displayed::new(self, Some(ctx))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&Displayed::new(self, None), f)
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

impl From<VarId> for Expr {
    fn from(v: VarId) -> Self {
        Expr::var(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs.clone())
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a, b]));
binop!(Sub, sub, |a, b| Expr::sum([a, -b]));
binop!(Mul, mul, |a, b| Expr::product([a, b]));
binop!(Div, div, |a, b| Expr::product([a, b.recip()]));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        if let Some(n) = self.as_number() {
            return Expr::number(n.neg());
        }
        if let Node::Neg(inner) = self.node() {
            return inner.clone();
        }
        Expr::product([Expr::int(-1), self])
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_equality_ignores_sharing() {
        let a = Expr::state(0).exp() + Expr::int(2);
        let b = Expr::state(0).exp() + Expr::int(2);
        assert_eq!(a, b);
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let h = |e: &Expr| {
            let mut s = DefaultHasher::new();
            e.hash(&mut s);
            s.finish()
        };
        assert_eq!(h(&a), h(&b));
    }

    #[test]
    fn substitution_is_simultaneous() {
        // swap x and w: no capture of the freshly inserted variables
        let e = Expr::state(0) - Expr::wiener(0);
        let swapped = e.substitute_with(&|v| match v {
            VarId::State(0) => Some(Expr::wiener(0)),
            VarId::Wiener(0) => Some(Expr::state(0)),
            _ => None,
        });
        assert_eq!(swapped, Expr::wiener(0) - Expr::state(0));
    }

    #[test]
    fn dependency_queries() {
        let e = Expr::param("mu") * Expr::state(1).exp();
        assert!(e.depends_on(VarId::State(1)));
        assert!(!e.depends_on(VarId::Wiener(0)));
        assert_eq!(e.params().into_iter().collect::<Vec<_>>(), vec!["mu"]);
    }
}
