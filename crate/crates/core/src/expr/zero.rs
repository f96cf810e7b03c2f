use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_with_magnitude;
use super::{simplify, Context, Expr, Point, VarId};

/// How a `Zero` verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMode {
    Structural,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Point,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum ZeroVerdict {
    Zero { mode: ZeroMode },
    NonZero { witness: Box<Witness> },
    Inconclusive { failures: usize, samples: usize },
}

impl ZeroVerdict {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroVerdict::Zero { .. })
    }

    pub fn is_nonzero(&self) -> bool {
        matches!(self, ZeroVerdict::NonZero { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, ZeroVerdict::Inconclusive { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            ZeroVerdict::NonZero { witness } => Some(witness),
            _ => None,
        }
    }
}

/// Ranges the sampler draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingBox {
    pub state: (f64, f64),
    pub wiener: (f64, f64),
    pub time: (f64, f64),
    pub param: (f64, f64),
    /// Per-state overrides, zero-based index.
    pub state_overrides: BTreeMap<usize, (f64, f64)>,
    pub param_overrides: BTreeMap<String, (f64, f64)>,
}

impl Default for SamplingBox {
    fn default() -> Self {
        SamplingBox {
            state: (0.4, 2.0),
            wiener: (-1.5, 1.5),
            time: (0.1, 2.0),
            param: (0.5, 1.5),
            state_overrides: BTreeMap::new(),
            param_overrides: BTreeMap::new(),
        }
    }
}

impl SamplingBox {
    pub fn range(&self, v: VarId) -> (f64, f64) {
        match v {
            VarId::State(i) => self.state_overrides.get(&i).copied().unwrap_or(self.state),
            VarId::Time => self.time,
            VarId::Wiener(_) => self.wiener,
        }
    }

    pub fn param_range(&self, name: &str) -> (f64, f64) {
        self.param_overrides.get(name).copied().unwrap_or(self.param)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroTestConfig {
    pub samples: usize,
    pub abs_tol: f64,
    pub seed: u64,
    pub sampling: SamplingBox,
}

impl Default for ZeroTestConfig {
    fn default() -> Self {
        ZeroTestConfig {
            samples: 64,
            abs_tol: 1e-9,
            seed: 0x5eed_2e70,
            sampling: SamplingBox::default(),
        }
    }
}

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * inv;
        i /= b;
        inv /= base as f64;
    }
    out
}

/// Quasi-random sample points: a Halton sequence with a seeded random
/// shift (modulo 1) per coordinate.
pub fn halton_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let base = PRIMES[d % PRIMES.len()];
                    // reuse of a base beyond 40 dimensions gets a distinct shift
                    (radical_inverse(i, base) + shift[d]).fract()
                })
                .collect()
        })
        .collect()
}

/// Decides whether `e` vanishes identically on the sampling box.
///
/// A tree that simplifies to the literal 0 is `Zero` (structural).
/// Otherwise the simplified tree is evaluated at `samples` points and any
/// value above `abs_tol * (1 + m)`, with `m` the largest summand seen while
/// evaluating, is a `NonZero` witness. Free parameters are sampled along
/// with the variables. More than half of the points failing to evaluate
/// gives `Inconclusive`.
pub fn is_identically_zero(e: &Expr, ctx: &Context, cfg: &ZeroTestConfig) -> ZeroVerdict {
    let s = simplify(e);
    if s.is_zero() {
        return ZeroVerdict::Zero {
            mode: ZeroMode::Structural,
        };
    }
    let vars = ctx.all_vars();
    let fixed = ctx.numeric_params();
    let free: Vec<String> = s
        .params()
        .into_iter()
        .filter(|p| !fixed.contains_key(p))
        .collect();
    let dim = vars.len() + free.len();
    let lerp = |(a, b): (f64, f64), u: f64| a + (b - a) * u;

    let mut failures = 0usize;
    let mut worst: Option<Witness> = None;
    for u in halton_points(dim, cfg.samples, cfg.seed) {
        let mut point = Point::new(vec![0.0; ctx.n], 0.0, vec![0.0; ctx.m]);
        for (v, ui) in vars.iter().zip(&u) {
            let val = lerp(cfg.sampling.range(*v), *ui);
            match v {
                VarId::State(i) => point.x[*i] = val,
                VarId::Time => point.t = val,
                VarId::Wiener(k) => point.w[*k] = val,
            }
        }
        let mut params = fixed.clone();
        for (p, ui) in free.iter().zip(&u[vars.len()..]) {
            params.insert(p.clone(), lerp(cfg.sampling.param_range(p), *ui));
        }
        match evaluate_with_magnitude(&s, &point, &params) {
            Err(_) => failures += 1,
            Ok((value, magnitude)) => {
                let excess = value.abs() / (cfg.abs_tol * (1.0 + magnitude));
                if excess > 1.0 {
                    let better = worst
                        .as_ref()
                        .is_none_or(|w| excess > w.value.abs() / (cfg.abs_tol * (1.0 + w.magnitude)));
                    if better {
                        worst = Some(Witness {
                            point,
                            params,
                            value,
                            magnitude,
                        });
                    }
                }
            }
        }
    }
    if failures * 2 > cfg.samples {
        return ZeroVerdict::Inconclusive {
            failures,
            samples: cfg.samples,
        };
    }
    match worst {
        Some(w) => ZeroVerdict::NonZero {
            witness: Box::new(w),
        },
        None => ZeroVerdict::Zero {
            mode: ZeroMode::Sampled,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ParamValue};

    #[test]
    fn structural_and_sampled() {
        let ctx = Context::scalar();
        let cfg = ZeroTestConfig::default();
        assert_eq!(
            is_identically_zero(&Expr::zero(), &ctx, &cfg),
            ZeroVerdict::Zero { mode: ZeroMode::Structural }
        );
        // (x+1)^2 - x^2 - 2x - 1 needs expansion, so only sampling sees it
        let e = parse("(x + 1)^2 - x^2 - 2*x - 1", &ctx).unwrap();
        assert_eq!(
            is_identically_zero(&e, &ctx, &cfg),
            ZeroVerdict::Zero { mode: ZeroMode::Sampled }
        );
    }

    #[test]
    fn nonzero_with_witness() {
        let ctx = Context::scalar()
            .with_param("alpha", ParamValue::Numeric(2.0))
            .unwrap()
            .with_param("mu", ParamValue::Numeric(1.0))
            .unwrap();
        let e = parse("alpha*(alpha - 1)*mu^2*x^(2*alpha - 1)", &ctx).unwrap();
        let v = is_identically_zero(&e, &ctx, &ZeroTestConfig::default());
        let w = v.witness().expect("nonzero");
        assert!((w.value - 2.0 * w.point.x[0].powi(3)).abs() < 1e-12);
    }

    #[test]
    fn inconclusive_when_undefined() {
        let ctx = Context::scalar();
        let e = parse("log(-x) - log(-x)*1 + w - w + sqrt(-x)", &ctx).unwrap();
        assert!(is_identically_zero(&e, &ctx, &ZeroTestConfig::default()).is_inconclusive());
    }

    #[test]
    fn free_parameters_are_sampled() {
        let ctx = Context::scalar()
            .with_param("c", ParamValue::Symbolic)
            .unwrap();
        let e = parse("c*x - x*c", &ctx).unwrap();
        assert!(is_identically_zero(&e, &ctx, &ZeroTestConfig::default()).is_zero());
        let e = parse("c - 1", &ctx).unwrap();
        assert!(is_identically_zero(&e, &ctx, &ZeroTestConfig::default()).is_nonzero());
    }
}
