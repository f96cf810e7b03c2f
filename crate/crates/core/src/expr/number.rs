use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedMul, One, Signed, ToPrimitive, Zero};

/// Numeric literal. Rationals stay exact until an operation overflows
/// `i64`, at which point the result degrades to a float.
#[derive(Clone, Copy, Debug)]
pub enum Number {
    Rational(Rational64),
    Float(f64),
}

impl Number {
    pub fn int(v: i64) -> Number {
        Number::Rational(Rational64::from_integer(v))
    }

    pub fn rational(num: i64, den: i64) -> Number {
        assert!(den != 0, "zero denominator");
        Number::Rational(Rational64::new(num, den))
    }

    /// Recovers short fractions (denominator up to 10^6) exactly; anything
    /// else is stored as a float.
    pub fn from_f64_exact(v: f64) -> Number {
        if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 {
            return Number::int(v as i64);
        }
        if v.is_finite() && v.abs() < 1.0e9 {
            // continued fraction expansion
            let (mut h0, mut h1) = (0i64, 1i64);
            let (mut k0, mut k1) = (1i64, 0i64);
            let mut x = v;
            for _ in 0..40 {
                let a = x.floor();
                if a.abs() > 1.0e12 {
                    break;
                }
                let a = a as i64;
                let (h2, k2) = match (
                    a.checked_mul(h1).and_then(|p| p.checked_add(h0)),
                    a.checked_mul(k1).and_then(|p| p.checked_add(k0)),
                ) {
                    (Some(h), Some(k)) => (h, k),
                    _ => break,
                };
                if k2 > 1_000_000 {
                    break;
                }
                (h0, h1, k0, k1) = (h1, h2, k1, k2);
                if (h1 as f64 / k1 as f64) == v {
                    return Number::rational(h1, k1);
                }
                let frac = x - a as f64;
                if frac == 0.0 {
                    break;
                }
                x = 1.0 / frac;
            }
        }
        Number::Float(v)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Number::Float(f) => f,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(r) => r.is_one(),
            Number::Float(f) => f == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(f) => f < 0.0,
        }
    }

    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Number::Rational(_))
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() + other.to_f64()),
            },
            _ => Number::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() * other.to_f64()),
            },
            _ => Number::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => match r.numer().checked_neg() {
                Some(n) => Number::Rational(Rational64::new_raw(n, *r.denom())),
                None => Number::Float(-self.to_f64()),
            },
            Number::Float(f) => Number::Float(-f),
        }
    }

    /// Reciprocal; `None` for zero.
    pub fn recip(self) -> Option<Number> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Number::Rational(r) => {
                if *r.numer() == i64::MIN {
                    Number::Float(1.0 / self.to_f64())
                } else {
                    Number::Rational(r.recip())
                }
            }
            Number::Float(f) => Number::Float(1.0 / f),
        })
    }

    /// Integer power, exact when possible. `None` for `0^negative`.
    pub fn powi(self, k: i64) -> Option<Number> {
        if k < 0 {
            return self.recip()?.powi(k.checked_neg()?);
        }
        let mut acc = Number::int(1);
        let mut base = self;
        let mut e = k as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(base);
            }
        }
        Some(acc)
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Number {}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a.cmp(b),
            (Number::Float(a), Number::Float(b)) => a.total_cmp(b),
            (Number::Rational(_), Number::Float(_)) => Ordering::Less,
            (Number::Float(_), Number::Rational(_)) => Ordering::Greater,
        }
    }
}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Number::Rational(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Number::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Number::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            // scientific form marks the literal as a float for the parser
            Number::Float(v) => write!(f, "{v:e}"),
        }
    }
}

impl ToPrimitive for Number {
    fn to_i64(&self) -> Option<i64> {
        self.as_integer()
    }
    fn to_u64(&self) -> Option<u64> {
        self.as_integer().and_then(|v| u64::try_from(v).ok())
    }
    fn to_f64(&self) -> Option<f64> {
        Some(Number::to_f64(*self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_arithmetic() {
        let half = Number::rational(1, 2);
        assert_eq!(half.add(half), Number::int(1));
        assert_eq!(half.mul(Number::int(4)), Number::int(2));
        assert_eq!(Number::int(2).powi(-2), Some(Number::rational(1, 4)));
        assert_eq!(Number::int(0).powi(-1), None);
    }

    #[test]
    fn overflow_degrades_to_float() {
        let big = Number::int(i64::MAX);
        assert!(matches!(big.add(big), Number::Float(_)));
    }

    #[test]
    fn short_fractions_recovered() {
        assert_eq!(Number::from_f64_exact(0.5), Number::rational(1, 2));
        assert_eq!(Number::from_f64_exact(-0.3), Number::rational(-3, 10));
        assert_eq!(Number::from_f64_exact(3.0), Number::int(3));
        assert!(matches!(Number::from_f64_exact(std::f64::consts::PI), Number::Float(_)));
    }
}
