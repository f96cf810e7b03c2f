use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Noise, SymmetryError, VectorField};
use crate::expr::{
    evaluate, halton_points, is_identically_zero, Context, Expr, Number, Point, VarId,
    ZeroTestConfig,
};

/// `[X, Y]`, acting as `X(Y u) - Y(X u)`. With `h = R w` the noise part is
/// `R_Y R_X - R_X R_Y`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, SymmetryError> {
    if x.phi.len() != y.phi.len() {
        return Err(SymmetryError::PhiDimension {
            n: x.phi.len(),
            got: y.phi.len(),
        });
    }
    let comp = |a: &Expr, b: &Expr| (x.apply(b) - y.apply(a)).simplified();
    let phi: Vec<Expr> = x.phi.iter().zip(&y.phi).map(|(a, b)| comp(a, b)).collect();
    let tau = comp(&x.tau, &y.tau);
    let noise = match (&x.noise, &y.noise) {
        (Noise::None, Noise::None) => Noise::None,
        (Noise::LinearW(rx), Noise::LinearW(ry)) => {
            if rx.shape() != ry.shape() {
                return Err(SymmetryError::NoiseDimension {
                    m: rx.nrows(),
                    got: ry.nrows(),
                });
            }
            Noise::LinearW(ry * rx - rx * ry)
        }
        (Noise::GeneralH(hx), Noise::GeneralH(hy)) => {
            if hx.len() != hy.len() {
                return Err(SymmetryError::NoiseDimension {
                    m: hx.len(),
                    got: hy.len(),
                });
            }
            Noise::GeneralH(hx.iter().zip(hy).map(|(a, b)| comp(a, b)).collect())
        }
        _ => return Err(SymmetryError::MixedNoise),
    };
    Ok(VectorField { phi, tau, noise })
}

/// `c[a][b][c]`: `[X_a, X_b] = sum_c c[a][b][c] X_c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureConstants(pub Vec<Vec<Vec<f64>>>);

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solvability {
    Solvable {
        constants: StructureConstants,
        /// Dimensions of the derived series, starting with the full algebra and ending at 0.
        derived_dims: Vec<usize>,
        abelian: bool,
        /// Basis in coefficient space adapted to the series: the last
        /// `derived_dims[q]` vectors span the q-th derived algebra.
        adapted_basis: Vec<Vec<f64>>,
        /// Generator indices when the adapted basis is a permutation of the generators.
        order: Option<Vec<usize>>,
    },
    NotSolvable {
        constants: StructureConstants,
        derived_dims: Vec<usize>,
    },
    Inconclusive {
        reason: String,
    },
}

fn components(x: &VectorField, m: usize) -> Vec<Expr> {
    let mut c = x.phi.clone();
    c.push(x.tau.clone());
    c.extend(x.h(m));
    c
}

/// Nearest short fraction, when one is within `1e-8`.
fn snap(v: f64) -> f64 {
    for den in 1..=64i64 {
        let num = (v * den as f64).round();
        if (v - num / den as f64).abs() < 1e-8 {
            return num / den as f64;
        }
    }
    v
}

fn rank(vectors: &[DVector<f64>], dim: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_columns(vectors);
    debug_assert_eq!(mat.nrows(), dim);
    mat.rank(1e-9)
}

/// Basis of the span of `vectors` (greedy selection).
fn span_basis(vectors: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut trial = basis.clone();
        trial.push(v.clone());
        if rank(&trial, dim) > basis.len() {
            basis = trial;
        }
    }
    basis
}

fn bracket_coeffs(c: &[Vec<Vec<f64>>], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let r = u.len();
    let mut out = DVector::zeros(r);
    for a in 0..r {
        for b in 0..r {
            let w = u[a] * v[b];
            if w != 0.0 {
                for k in 0..r {
                    out[k] += w * c[a][b][k];
                }
            }
        }
    }
    out
}

/// Recovers the structure constants of the span of `generators` and runs
/// the derived series.
pub fn solvability_check(
    generators: &[VectorField],
    ctx: &Context,
    cfg: &ZeroTestConfig,
) -> Result<Solvability, SymmetryError> {
    let r = generators.len();
    if r == 0 {
        return Err(SymmetryError::Empty);
    }
    for g in generators {
        g.check_dims(ctx)?;
    }
    let m = ctx.m;
    let params = ctx.numeric_params();
    let comps: Vec<Vec<Expr>> = generators.iter().map(|g| components(g, m)).collect();

    // sample every component at a set of points
    let vars = ctx.all_vars();
    let npts = 12.max(2 * r);
    let pts: Vec<Point> = halton_points(vars.len(), npts, cfg.seed ^ 0xb7ac)
        .into_iter()
        .map(|u| {
            let mut p = Point::new(vec![0.0; ctx.n], 0.0, vec![0.0; m]);
            for (v, ui) in vars.iter().zip(u) {
                let (lo, hi) = cfg.sampling.range(*v);
                let val = lo + (hi - lo) * ui;
                match v {
                    VarId::State(i) => p.x[*i] = val,
                    VarId::Time => p.t = val,
                    VarId::Wiener(k) => p.w[*k] = val,
                }
            }
            p
        })
        .collect();
    let sample = |es: &[Expr]| -> Option<DVector<f64>> {
        let mut out = Vec::with_capacity(es.len() * pts.len());
        for p in &pts {
            for e in es {
                out.push(evaluate(e, p, &params).ok()?);
            }
        }
        Some(DVector::from_vec(out))
    };
    let mut columns = Vec::with_capacity(r);
    for c in &comps {
        match sample(c) {
            Some(v) => columns.push(v),
            None => {
                return Ok(Solvability::Inconclusive {
                    reason: "a generator could not be evaluated at the sample points".into(),
                })
            }
        }
    }
    let a = DMatrix::from_columns(&columns);
    if a.rank(1e-9) < r {
        return Ok(Solvability::Inconclusive {
            reason: "generators are linearly dependent".into(),
        });
    }
    let svd = a.clone().svd(true, true);

    let mut consts = vec![vec![vec![0.0; r]; r]; r];
    for i in 0..r {
        for j in (i + 1)..r {
            let br = lie_bracket(&generators[i], &generators[j])?;
            let bc = components(&br, m);
            let Some(rhs) = sample(&bc) else {
                return Ok(Solvability::Inconclusive {
                    reason: format!("bracket [X{}, X{}] could not be evaluated", i + 1, j + 1),
                });
            };
            let Ok(sol) = svd.solve(&rhs, 1e-12) else {
                return Ok(Solvability::Inconclusive {
                    reason: "least-squares solve failed".into(),
                });
            };
            let coeffs: Vec<f64> = sol.iter().map(|&v| snap(v)).collect();
            // verify symbolically, component by component
            for (ci, e) in bc.iter().enumerate() {
                let combo = Expr::sum(
                    coeffs
                        .iter()
                        .zip(&comps)
                        .filter(|(c, _)| **c != 0.0)
                        .map(|(c, g)| Expr::number(Number::from_f64_exact(*c)) * &g[ci]),
                );
                if !is_identically_zero(&(e - combo), ctx, cfg).is_zero() {
                    return Ok(Solvability::Inconclusive {
                        reason: format!(
                            "bracket [X{}, X{}] is not in the span of the generators",
                            i + 1,
                            j + 1
                        ),
                    });
                }
            }
            for k in 0..r {
                consts[i][j][k] = coeffs[k];
                consts[j][i][k] = -coeffs[k];
            }
        }
    }

    // derived series in coefficient space
    let mut series: Vec<Vec<DVector<f64>>> =
        vec![(0..r).map(|a| DVector::from_fn(r, |k, _| (k == a) as u8 as f64)).collect()];
    loop {
        let cur = series.last().unwrap();
        let mut brackets = Vec::new();
        for (p, u) in cur.iter().enumerate() {
            for v in &cur[p + 1..] {
                brackets.push(bracket_coeffs(&consts, u, v));
            }
        }
        let next = span_basis(&brackets, r);
        if next.len() == cur.len() {
            let dims = series.iter().map(Vec::len).collect();
            return Ok(Solvability::NotSolvable {
                constants: StructureConstants(consts),
                derived_dims: dims,
            });
        }
        let done = next.is_empty();
        series.push(next);
        if done {
            break;
        }
    }
    let derived_dims: Vec<usize> = series.iter().map(Vec::len).collect();

    // extend from the bottom of the series upwards
    let mut adapted: Vec<DVector<f64>> = Vec::new();
    for level in series.iter().rev().skip(1) {
        for v in level {
            let mut trial = adapted.clone();
            trial.push(v.clone());
            if rank(&trial, r) > adapted.len() {
                adapted = trial;
            }
        }
    }
    adapted.reverse();
    let order = adapted
        .iter()
        .map(|v| {
            let nz: Vec<usize> = (0..r).filter(|&k| v[k].abs() > 1e-12).collect();
            (nz.len() == 1).then(|| nz[0])
        })
        .collect::<Option<Vec<usize>>>();
    Ok(Solvability::Solvable {
        constants: StructureConstants(consts),
        abelian: derived_dims.get(1) == Some(&0),
        derived_dims,
        adapted_basis: adapted.iter().map(|v| v.iter().copied().collect()).collect(),
        order,
    })
}
