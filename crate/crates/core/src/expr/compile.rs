use std::collections::BTreeMap;

use super::eval::{apply, pow};
use super::{EvalError, Expr, Func, Node, VarId};

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    State(usize),
    Time,
    Wiener(usize),
    Add(usize),
    Mul(usize),
    Neg,
    Powi(i32),
    Pow,
    Apply(Func),
}

/// Flat postfix program for fast repeated evaluation. Parameters are bound
/// at compile time. Domain errors evaluate to NaN.
#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
}

impl Program {
    pub fn compile(e: &Expr, params: &BTreeMap<String, f64>) -> Result<Program, EvalError> {
        let mut ops = Vec::new();
        emit(e, params, &mut ops)?;
        let mut depth = 0usize;
        let mut cur = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::State(_) | Op::Time | Op::Wiener(_) => cur += 1,
                Op::Add(n) | Op::Mul(n) => cur -= n - 1,
                Op::Pow => cur -= 1,
                Op::Neg | Op::Powi(_) | Op::Apply(_) => {}
            }
            depth = depth.max(cur);
        }
        Ok(Program { ops, depth })
    }

    /// Evaluates with a caller-provided scratch stack.
    pub fn eval_with(&self, stack: &mut Vec<f64>, x: &[f64], t: f64, w: &[f64]) -> f64 {
        stack.clear();
        stack.reserve(self.depth);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::State(i) => stack.push(x[i]),
                Op::Time => stack.push(t),
                Op::Wiener(k) => stack.push(w[k]),
                Op::Add(n) => {
                    let at = stack.len() - n;
                    let s: f64 = stack[at..].iter().sum();
                    stack.truncate(at);
                    stack.push(s);
                }
                Op::Mul(n) => {
                    let at = stack.len() - n;
                    let p: f64 = stack[at..].iter().product();
                    stack.truncate(at);
                    stack.push(p);
                }
                Op::Neg => {
                    let v = stack.last_mut().unwrap();
                    *v = -*v;
                }
                Op::Powi(k) => {
                    let v = stack.last_mut().unwrap();
                    *v = if *v == 0.0 && k < 0 { f64::NAN } else { v.powi(k) };
                }
                Op::Pow => {
                    let e = stack.pop().unwrap();
                    let v = stack.last_mut().unwrap();
                    *v = pow(*v, e).unwrap_or(f64::NAN);
                }
                Op::Apply(f) => {
                    let v = stack.last_mut().unwrap();
                    *v = apply(f, *v).unwrap_or(f64::NAN);
                }
            }
        }
        stack[0]
    }

    pub fn eval(&self, x: &[f64], t: f64, w: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.depth);
        self.eval_with(&mut stack, x, t, w)
    }

    /// True when the program reads no variable at all.
    pub fn is_constant(&self) -> bool {
        self.ops.iter().all(|o| matches!(o, Op::Const(_) | Op::Add(_) | Op::Mul(_) | Op::Neg | Op::Powi(_) | Op::Pow | Op::Apply(_)))
    }
}

fn emit(e: &Expr, params: &BTreeMap<String, f64>, ops: &mut Vec<Op>) -> Result<(), EvalError> {
    match e.node() {
        Node::Const(n) => ops.push(Op::Const(n.to_f64())),
        Node::Var(v) => ops.push(match *v {
            VarId::State(i) => Op::State(i),
            VarId::Time => Op::Time,
            VarId::Wiener(k) => Op::Wiener(k),
        }),
        Node::Param(p) => ops.push(Op::Const(
            *params
                .get(p.as_ref())
                .ok_or_else(|| EvalError::UnboundParam(p.to_string()))?,
        )),
        Node::Sum(ts) => {
            for t in ts {
                emit(t, params, ops)?;
            }
            ops.push(Op::Add(ts.len()));
        }
        Node::Product(fs) => {
            for f in fs {
                emit(f, params, ops)?;
            }
            ops.push(Op::Mul(fs.len()));
        }
        Node::Neg(a) => {
            emit(a, params, ops)?;
            ops.push(Op::Neg);
        }
        Node::Pow(b, x) => {
            emit(b, params, ops)?;
            match x.as_number().and_then(|n| n.as_integer()) {
                Some(k) if k.abs() < i32::MAX as i64 => ops.push(Op::Powi(k as i32)),
                _ => {
                    emit(x, params, ops)?;
                    ops.push(Op::Pow);
                }
            }
        }
        Node::Apply(f, a) => {
            emit(a, params, ops)?;
            ops.push(Op::Apply(*f));
        }
    }
    Ok(())
}
