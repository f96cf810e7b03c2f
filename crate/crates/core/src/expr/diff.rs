use std::collections::HashMap;

use super::{simplify, Expr, Func, Node, VarId};

/// Partial derivative of `e` with respect to `v`, simplified.
pub fn differentiate(e: &Expr, v: VarId) -> Expr {
    Differentiator::new(v).diff(e)
}

/// Differentiation with a cache of already processed subtrees, useful when
/// many derivatives of overlapping expressions are needed.
pub struct Differentiator {
    var: VarId,
    cache: HashMap<Expr, Expr>,
}

impl Differentiator {
    pub fn new(var: VarId) -> Self {
        Differentiator {
            var,
            cache: HashMap::new(),
        }
    }

    pub fn diff(&mut self, e: &Expr) -> Expr {
        let raw = self.raw(e);
        simplify(&raw)
    }

    fn raw(&mut self, e: &Expr) -> Expr {
        if !e.depends_on(self.var) {
            return Expr::zero();
        }
        if let Some(d) = self.cache.get(e) {
            return d.clone();
        }
        let d = self.rule(e);
        self.cache.insert(e.clone(), d.clone());
        d
    }

    fn rule(&mut self, e: &Expr) -> Expr {
        match e.node() {
            Node::Const(_) | Node::Param(_) => Expr::zero(),
            Node::Var(u) => {
                if *u == self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| self.raw(t)).collect::<Vec<_>>()),
            Node::Product(fs) => {
                let mut terms = Vec::new();
                for i in 0..fs.len() {
                    let di = self.raw(&fs[i]);
                    if di.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = fs.clone();
                    factors[i] = di;
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Node::Neg(a) => -self.raw(a),
            Node::Pow(b, x) => {
                let db = self.raw(b);
                if !x.depends_on(self.var) {
                    // x * b^(x-1) * b'
                    let lowered = match x.as_number() {
                        Some(n) => Expr::number(n.add(super::Number::int(-1))),
                        None => x - Expr::one(),
                    };
                    return Expr::product([x.clone(), Expr::pow(b.clone(), lowered), db]);
                }
                let dx = self.raw(x);
                // b^x * (x' log b + x b'/b)
                Expr::product([
                    e.clone(),
                    Expr::sum([
                        Expr::product([dx, b.clone().log()]),
                        Expr::product([x.clone(), db, b.clone().recip()]),
                    ]),
                ])
            }
            Node::Apply(f, a) => {
                let da = self.raw(a);
                let outer = match f {
                    Func::Exp => e.clone(),
                    Func::Log => a.clone().recip(),
                    Func::Sqrt => Expr::product([Expr::rational(1, 2), e.clone().recip()]),
                    Func::Sin => a.clone().cos(),
                    Func::Cos => -a.clone().sin(),
                    Func::Arctan => (Expr::one() + a.clone().powi(2)).recip(),
                    Func::Ei => Expr::product([a.clone().exp(), a.clone().recip()]),
                };
                Expr::product([outer, da])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, Context, Point};
    use std::collections::BTreeMap;

    #[test]
    fn chain_rule_examples() {
        let ctx = Context::scalar();
        let e = parse("exp(x - w)", &ctx).unwrap().simplified();
        assert_eq!(e.diff(VarId::State(0)), e);
        assert_eq!(e.diff(VarId::Wiener(0)), parse("-exp(x - w)", &ctx).unwrap().simplified());
    }

    #[test]
    fn ei_derivative_matches_finite_differences() {
        let ctx = Context::scalar();
        let e = parse("Ei(2/x)", &ctx).unwrap();
        let d = e.diff(VarId::State(0));
        let closed = parse("-exp(2/x)/x", &ctx).unwrap();
        let p = BTreeMap::new();
        let at = |ex: &Expr, x: f64| evaluate(ex, &Point::new(vec![x], 0.0, vec![0.0]), &p).unwrap();
        let h = 1e-5;
        for i in 0..16 {
            let x = 0.5 + 1.5 * (i as f64 + 0.5) / 16.0;
            let fd = (at(&e, x + h) - at(&e, x - h)) / (2.0 * h);
            let sym = at(&d, x);
            assert!((fd - sym).abs() / sym.abs() < 1e-6, "x={x}: {fd} vs {sym}");
            assert!((at(&closed, x) - sym).abs() / sym.abs() < 1e-12);
        }
    }
}
