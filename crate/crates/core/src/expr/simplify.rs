use std::collections::BTreeMap;

use super::{Expr, Func, Node, Number};

/// Bottom-up rewriting: constants folded, like terms and like factors
/// merged, exponentials combined. The result is numerically equal to the
/// input wherever both evaluate, but it is not a canonical form.
pub fn simplify(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(_) | Node::Var(_) | Node::Param(_) => e.clone(),
        Node::Neg(a) => mul_terms(vec![Expr::int(-1), simplify(a)]),
        Node::Sum(ts) => add_terms(ts.iter().map(simplify).collect()),
        Node::Product(fs) => mul_terms(fs.iter().map(simplify).collect()),
        Node::Pow(b, x) => mul_terms(vec![Expr::from_node(Node::Pow(simplify(b), simplify(x)))]),
        Node::Apply(f, a) => apply(*f, simplify(a)),
    }
}

fn split_coeff(t: &Expr) -> (Number, Expr) {
    match t.node() {
        Node::Const(n) => (*n, Expr::one()),
        Node::Product(fs) => match fs[0].as_number() {
            Some(c) => {
                let rest = if fs.len() == 2 {
                    fs[1].clone()
                } else {
                    Expr::from_node(Node::Product(fs[1..].to_vec()))
                };
                (c, rest)
            }
            None => (Number::int(1), t.clone()),
        },
        _ => (Number::int(1), t.clone()),
    }
}

fn with_coeff(c: Number, rest: Expr) -> Expr {
    if c.is_one() {
        return rest;
    }
    if rest.is_one() {
        return Expr::number(c);
    }
    let mut fs = vec![Expr::number(c)];
    match rest.node() {
        Node::Product(inner) => fs.extend(inner.iter().cloned()),
        _ => fs.push(rest),
    }
    Expr::from_node(Node::Product(fs))
}

/// Sums already simplified terms.
fn add_terms(terms: Vec<Expr>) -> Expr {
    let mut acc: BTreeMap<Expr, Number> = BTreeMap::new();
    let mut stack = terms;
    stack.reverse();
    while let Some(t) = stack.pop() {
        if let Node::Sum(inner) = t.node() {
            stack.extend(inner.iter().rev().cloned());
            continue;
        }
        let (c, rest) = split_coeff(&t);
        if c.is_zero() {
            continue;
        }
        let slot = acc.entry(rest).or_insert(Number::int(0));
        *slot = slot.add(c);
    }
    let mut out: Vec<Expr> = acc
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(rest, c)| with_coeff(c, rest))
        .collect();
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::from_node(Node::Sum(out)),
    }
}

#[derive(Default)]
struct Factors {
    coeff: Option<Number>,
    powers: BTreeMap<Expr, Vec<Expr>>,
    exp_args: Vec<Expr>,
}

impl Factors {
    fn scale(&mut self, n: Number) {
        self.coeff = Some(match self.coeff {
            Some(c) => c.mul(n),
            None => n,
        });
    }

    fn factor(&mut self, f: Expr) {
        match f.node() {
            Node::Const(n) => self.scale(*n),
            Node::Product(fs) => fs.iter().for_each(|x| self.factor(x.clone())),
            Node::Pow(b, x) => self.power(b.clone(), x.clone()),
            Node::Apply(Func::Exp, a) => self.exp_args.push(a.clone()),
            _ => self.power(f, Expr::one()),
        }
    }

    fn power(&mut self, base: Expr, exponent: Expr) {
        let int_exp = exponent.as_number().and_then(Number::as_integer);
        match base.node() {
            Node::Const(b) => {
                if let Some(k) = int_exp {
                    if let Some(v) = b.powi(k) {
                        self.scale(v);
                        return;
                    }
                }
            }
            Node::Product(fs) if int_exp.is_some() => {
                for f in fs {
                    self.power(f.clone(), exponent.clone());
                }
                return;
            }
            Node::Pow(b, y) if int_exp.is_some() => {
                let combined = mul_terms(vec![y.clone(), exponent]);
                self.power(b.clone(), combined);
                return;
            }
            Node::Apply(Func::Exp, a) => {
                self.exp_args.push(mul_terms(vec![a.clone(), exponent]));
                return;
            }
            _ => {}
        }
        self.powers.entry(base).or_default().push(exponent);
    }

    fn build(mut self) -> Expr {
        // exp(c*log a + rest) -> a^c * exp(rest)
        let exp_arg = add_terms(std::mem::take(&mut self.exp_args));
        let mut kept = Vec::new();
        let exp_terms = match exp_arg.node() {
            Node::Sum(ts) => ts.clone(),
            _ => vec![exp_arg],
        };
        for t in exp_terms {
            let (c, rest) = split_coeff(&t);
            if let Node::Apply(Func::Log, a) = rest.node() {
                self.power(a.clone(), Expr::number(c));
            } else {
                kept.push(t);
            }
        }
        let exp_arg = add_terms(kept);

        let mut coeff = self.coeff.unwrap_or(Number::int(1));
        let mut factors = Vec::new();
        let mut extra_exp = Vec::new();
        for (base, exps) in std::mem::take(&mut self.powers) {
            let x = add_terms(exps);
            match fold_power(base, x) {
                Folded::Const(n) => coeff = coeff.mul(n),
                Folded::Expr(e) => match e.node() {
                    Node::Apply(Func::Exp, a) => extra_exp.push(a.clone()),
                    _ => factors.push(e),
                },
            }
        }
        if coeff.is_zero() {
            return Expr::zero();
        }
        let exp_arg = if extra_exp.is_empty() {
            exp_arg
        } else {
            extra_exp.push(exp_arg);
            add_terms(extra_exp)
        };
        if !exp_arg.is_zero() {
            factors.push(Expr::apply(Func::Exp, exp_arg));
        }
        if factors.len() == 1 && !coeff.is_one() {
            if let Node::Sum(ts) = factors[0].node() {
                return add_terms(
                    ts.iter()
                        .map(|t| mul_terms(vec![Expr::number(coeff), t.clone()]))
                        .collect(),
                );
            }
        }
        if !coeff.is_one() {
            factors.insert(0, Expr::number(coeff));
        }
        match factors.len() {
            0 => Expr::one(),
            1 => factors.pop().unwrap(),
            _ => Expr::from_node(Node::Product(factors)),
        }
    }
}

/// Multiplies already simplified factors.
fn mul_terms(factors: Vec<Expr>) -> Expr {
    let mut acc = Factors::default();
    for f in factors {
        if f.is_zero() {
            return Expr::zero();
        }
        acc.factor(f);
    }
    acc.build()
}

enum Folded {
    Const(Number),
    Expr(Expr),
}

fn exact_root(v: i64, q: u32) -> Option<i64> {
    if v < 0 {
        return None;
    }
    let r = (v as f64).powf(1.0 / q as f64).round() as i64;
    (r.max(0) - 1..=r + 1).find(|c| *c >= 0 && c.checked_pow(q) == Some(v))
}

fn fold_power(base: Expr, x: Expr) -> Folded {
    if x.is_zero() || base.is_one() {
        return Folded::Const(Number::int(1));
    }
    if x.is_one() {
        return match base.as_number() {
            Some(n) => Folded::Const(n),
            None => Folded::Expr(base),
        };
    }
    if let (Some(b), Some(n)) = (base.as_number(), x.as_number()) {
        match (b, n) {
            (Number::Rational(br), Number::Rational(nr)) => {
                if let Some(k) = n.as_integer() {
                    if let Some(v) = b.powi(k) {
                        return Folded::Const(v);
                    }
                } else if *nr.denom() <= 16 {
                    let q = *nr.denom() as u32;
                    let p = *nr.numer();
                    if let (Some(rn), Some(rd)) = (exact_root(*br.numer(), q), exact_root(*br.denom(), q)) {
                        if let Some(v) = Number::rational(rn, rd).powi(p) {
                            return Folded::Const(v);
                        }
                    }
                }
            }
            _ => {
                let (bf, nf) = (b.to_f64(), n.to_f64());
                let v = bf.powf(nf);
                if v.is_finite() && (bf > 0.0 || nf.fract() == 0.0) && !(bf == 0.0 && nf < 0.0) {
                    return Folded::Const(Number::Float(v));
                }
            }
        }
    }
    if base.is_zero() && x.as_number().is_some_and(|n| !n.is_negative()) {
        return Folded::Const(Number::int(0));
    }
    if let Node::Apply(Func::Exp, a) = base.node() {
        return Folded::Expr(Expr::apply(Func::Exp, mul_terms(vec![a.clone(), x])));
    }
    Folded::Expr(Expr::from_node(Node::Pow(base, x)))
}

fn apply(f: Func, a: Expr) -> Expr {
    match f {
        Func::Exp => mul_terms(vec![Expr::apply(Func::Exp, a)]),
        Func::Sqrt => mul_terms(vec![Expr::from_node(Node::Pow(a, Expr::rational(1, 2)))]),
        Func::Log => match a.node() {
            _ if a.is_one() => Expr::zero(),
            Node::Apply(Func::Exp, inner) => inner.clone(),
            Node::Const(Number::Float(v)) if *v > 0.0 => Expr::float(v.ln()),
            _ => Expr::apply(f, a),
        },
        Func::Sin | Func::Arctan if a.is_zero() => Expr::zero(),
        Func::Cos if a.is_zero() => Expr::one(),
        Func::Sin | Func::Cos | Func::Arctan => match a.as_number() {
            Some(Number::Float(v)) => Expr::float(match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                _ => v.atan(),
            }),
            _ => Expr::apply(f, a),
        },
        Func::Ei => Expr::apply(f, a),
    }
}
