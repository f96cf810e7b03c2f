use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{special, Expr, Func, Node, VarId};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("variable {0:?} is not bound at this point")]
    UnboundVariable(VarId),
    #[error("parameter '{0}' has no numeric value")]
    UnboundParam(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// A point of the extended space `(x, t, w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub t: f64,
    pub w: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, t: f64, w: Vec<f64>) -> Point {
        Point { x, t, w }
    }

    pub fn get(&self, v: VarId) -> Option<f64> {
        match v {
            VarId::State(i) => self.x.get(i).copied(),
            VarId::Time => Some(self.t),
            VarId::Wiener(k) => self.w.get(k).copied(),
        }
    }
}

/// Evaluates `e` at `point`. Every parameter of `e` must be in `params`.
pub fn evaluate(e: &Expr, point: &Point, params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    Evaluator { point, params, magnitude: 0.0 }.eval(e)
}

/// Like [`evaluate`], also returning the largest absolute value of any
/// summand met on the way. Used to scale tolerances.
pub fn evaluate_with_magnitude(
    e: &Expr,
    point: &Point,
    params: &BTreeMap<String, f64>,
) -> Result<(f64, f64), EvalError> {
    let mut ev = Evaluator { point, params, magnitude: 0.0 };
    let v = ev.eval(e)?;
    Ok((v, ev.magnitude.max(v.abs())))
}

struct Evaluator<'a> {
    point: &'a Point,
    params: &'a BTreeMap<String, f64>,
    magnitude: f64,
}

fn domain(msg: impl Into<String>) -> EvalError {
    EvalError::Domain(msg.into())
}

pub(crate) fn pow(b: f64, x: f64) -> Result<f64, EvalError> {
    if b == 0.0 && x < 0.0 {
        return Err(domain("zero raised to a negative power"));
    }
    if x.fract() == 0.0 && x.abs() < 1.0e9 {
        return Ok(b.powi(x as i32));
    }
    if b < 0.0 {
        return Err(domain("negative base with non-integer exponent"));
    }
    Ok(b.powf(x))
}

pub(crate) fn apply(f: Func, a: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Exp => a.exp(),
        Func::Log => {
            if a <= 0.0 {
                return Err(domain(format!("log of non-positive value {a}")));
            }
            a.ln()
        }
        Func::Sqrt => {
            if a < 0.0 {
                return Err(domain(format!("sqrt of negative value {a}")));
            }
            a.sqrt()
        }
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Arctan => a.atan(),
        Func::Ei => {
            if a == 0.0 {
                return Err(domain("Ei at 0"));
            }
            special::ei(a)
        }
    })
}

impl Evaluator<'_> {
    fn eval(&mut self, e: &Expr) -> Result<f64, EvalError> {
        let v = match e.node() {
            Node::Const(n) => n.to_f64(),
            Node::Var(v) => self.point.get(*v).ok_or(EvalError::UnboundVariable(*v))?,
            Node::Param(p) => *self
                .params
                .get(p.as_ref())
                .ok_or_else(|| EvalError::UnboundParam(p.to_string()))?,
            Node::Sum(ts) => {
                let mut s = 0.0;
                for t in ts {
                    let v = self.eval(t)?;
                    self.magnitude = self.magnitude.max(v.abs());
                    s += v;
                }
                s
            }
            Node::Product(fs) => {
                let mut p = 1.0;
                for f in fs {
                    p *= self.eval(f)?;
                }
                p
            }
            Node::Neg(a) => -self.eval(a)?,
            Node::Pow(b, x) => {
                let bv = self.eval(b)?;
                let xv = self.eval(x)?;
                pow(bv, xv)?
            }
            Node::Apply(f, a) => {
                let av = self.eval(a)?;
                apply(*f, av)?
            }
        };
        if !v.is_finite() {
            return Err(domain("non-finite intermediate value"));
        }
        Ok(v)
    }
}
