use std::fmt::{self, Write};

use super::{Context, Expr, Node, Number, VarId};

const SUM: u8 = 0;
const TERM: u8 = 1;
const UNARY: u8 = 2;
const ATOM: u8 = 4;

/// Printable view of an expression, optionally using the names of a context.
pub struct Displayed<'a> {
    expr: &'a Expr,
    ctx: Option<&'a Context>,
}

impl<'a> Displayed<'a> {
    pub fn new(expr: &'a Expr, ctx: Option<&'a Context>) -> Self {
        Displayed { expr, ctx }
    }
}

impl fmt::Display for Displayed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer { ctx: self.ctx }.expr(f, self.expr, SUM)
    }
}

fn number_prec(n: Number) -> u8 {
    match n {
        Number::Rational(r) if !r.is_integer() => TERM,
        _ if n.is_negative() => UNARY,
        _ => ATOM,
    }
}

fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Sum(_) => SUM,
        Node::Product(_) => TERM,
        Node::Neg(_) => UNARY,
        Node::Pow(..) => 3,
        Node::Const(n) => number_prec(*n),
        Node::Var(_) | Node::Param(_) | Node::Apply(..) => ATOM,
    }
}

fn is_minus_one(e: &Expr) -> bool {
    e.as_number() == Some(Number::int(-1))
}

/// Factors after a leading -1 that can be printed as a plain minus sign.
fn negated_rest(fs: &[Expr]) -> Option<&[Expr]> {
    let plain = fs.len() >= 2
        && is_minus_one(&fs[0])
        && !matches!(fs[1].node(), Node::Const(_) | Node::Product(_));
    plain.then(|| &fs[1..])
}

struct Printer<'a> {
    ctx: Option<&'a Context>,
}

impl Printer<'_> {
    fn var(&self, v: VarId) -> String {
        match self.ctx {
            Some(c) => c.var_name(v),
            None => match v {
                VarId::State(i) => format!("x{}", i + 1),
                VarId::Wiener(k) => format!("w{}", k + 1),
                VarId::Time => "t".into(),
            },
        }
    }

    fn expr(&self, f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
        if prec(e) < min {
            f.write_char('(')?;
            self.bare(f, e)?;
            return f.write_char(')');
        }
        self.bare(f, e)
    }

    fn bare(&self, f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
        match e.node() {
            Node::Const(n) => write!(f, "{n}"),
            Node::Var(v) => f.write_str(&self.var(*v)),
            Node::Param(p) => f.write_str(p),
            Node::Apply(func, a) => {
                write!(f, "{}(", func.name())?;
                self.expr(f, a, SUM)?;
                f.write_char(')')
            }
            Node::Neg(a) => {
                f.write_char('-')?;
                self.expr(f, a, UNARY)
            }
            Node::Pow(b, x) => {
                self.expr(f, b, ATOM)?;
                f.write_char('^')?;
                self.expr(f, x, UNARY)
            }
            Node::Sum(ts) => {
                self.expr(f, &ts[0], TERM)?;
                for t in &ts[1..] {
                    self.sum_tail(f, t)?;
                }
                Ok(())
            }
            Node::Product(fs) => {
                if let Some(rest) = negated_rest(fs) {
                    f.write_char('-')?;
                    return self.factors(f, rest);
                }
                self.factors(f, fs)
            }
        }
    }

    fn factors(&self, f: &mut fmt::Formatter<'_>, fs: &[Expr]) -> fmt::Result {
        match fs[0].as_number() {
            Some(n) if !n.is_exact() || number_prec(n) == TERM => write!(f, "{n}")?,
            _ => self.expr(f, &fs[0], UNARY)?,
        }
        for (i, x) in fs.iter().enumerate().skip(1) {
            match x.node() {
                Node::Pow(b, ex) if is_minus_one(ex) => {
                    // `c/d` with literal c and d would re-parse as one constant
                    if i == 1 && fs[0].as_number().is_some() && b.as_number().is_some() {
                        f.write_char('*')?;
                        self.expr(f, x, UNARY)?;
                    } else {
                        f.write_char('/')?;
                        self.expr(f, b, UNARY)?;
                    }
                }
                _ => {
                    f.write_char('*')?;
                    self.expr(f, x, UNARY)?;
                }
            }
        }
        Ok(())
    }

    fn sum_tail(&self, f: &mut fmt::Formatter<'_>, t: &Expr) -> fmt::Result {
        match t.node() {
            Node::Neg(a) => {
                f.write_str(" - ")?;
                self.expr(f, a, TERM)
            }
            Node::Const(n) if n.is_negative() => write!(f, " - {}", n.neg()),
            Node::Product(fs) if fs[0].as_number().is_some_and(|n| n.is_negative()) => {
                if let Some(rest) = negated_rest(fs) {
                    f.write_str(" - ")?;
                    return self.factors(f, rest);
                }
                let mut flipped = fs.clone();
                flipped[0] = Expr::number(fs[0].as_number().unwrap().neg());
                f.write_str(" - ")?;
                self.bare(f, &Expr::from_node(Node::Product(flipped)))
            }
            _ => {
                f.write_str(" + ")?;
                self.expr(f, t, TERM)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn roundtrip(s: &str) {
        let ctx = Context::scalar();
        let a = parse(s, &ctx).unwrap();
        let printed = a.to_string();
        let b = parse(&printed, &ctx).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(a, b, "{s} printed as {printed}");
    }

    #[test]
    fn fixpoints() {
        for s in [
            "exp(-x) - (1/2)*exp(-2*x)",
            "x - 2*w",
            "x + -2*w",
            "-x*w",
            "-(x*w)",
            "x*(1/2)",
            "3*2^-1",
            "3/2/x",
            "(x^2)^3",
            "x^(1/2)",
            "(-2)^x",
            "x/(w*t)",
            "x - -w",
            "x - (t + w)",
            "1.5e0*x - 2.5e-3",
            "x*-3",
            "-x",
            "-x*w/t",
            "t - x*w",
            "-(x + w)*t",
            "x^-w",
            "(-x)^2",
            "--x",
            "-1/2*x/3",
        ] {
            roundtrip(s);
        }
    }

    #[test]
    fn readable_output() {
        let ctx = Context::scalar().with_state_names(&["y"]).unwrap();
        let e = parse("exp(-y) - (1/2)*exp(-2*y)", &ctx).unwrap();
        assert_eq!(e.display(&ctx).to_string(), "exp(-y) - 1/2*exp(-2*y)");
    }
}
