//! Special functions.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `Ei(x)` (Cauchy principal value for `x > 0`).
///
/// Power series up to `x = 40`, asymptotic expansion above. For negative
/// arguments `Ei(x) = -E1(-x)`, with `E1` from its series near the origin
/// and a continued fraction further out. Returns `-inf` at zero.
pub fn ei(x: f64) -> f64 {
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -e1(-x);
    }
    if x <= 40.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..400 {
            term *= x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        return EULER_GAMMA + x.ln() + sum;
    }
    // e^x/x * sum k!/x^k, truncated at the smallest term
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let next = term * k as f64 / x;
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 {
            break;
        }
    }
    x.exp() / x * sum
}

/// Exponential integral `E1(z)` for `z > 0`.
pub fn e1(z: f64) -> f64 {
    if z <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= -z / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return -EULER_GAMMA - z.ln() - sum;
    }
    // modified Lentz on E1(z) = e^{-z} / (z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_one_against_series_oracle() {
        // gamma + sum 1/(k k!)
        let mut fact = 1.0;
        let mut s = EULER_GAMMA;
        for k in 1..30 {
            fact *= k as f64;
            s += 1.0 / (k as f64 * fact);
        }
        assert!((ei(1.0) - s).abs() < 1e-12);
        assert!((ei(1.0) - 1.895_117_816_355_936_8).abs() < 1e-9);
    }

    #[test]
    fn reference_values() {
        assert!((ei(-1.0) + 0.219_383_934_395_520_3).abs() < 1e-13);
        assert!((ei(-5.0) + 0.001_148_295_591_275_325_7).abs() < 1e-15);
        assert!((ei(10.0) - 2492.228_976_241_877_7).abs() / 2492.2 < 1e-13);
        // either side of the series/asymptotic switch
        assert!((ei(39.999_999) / 6.039_712_378_982_45e15 - 1.0).abs() < 1e-13);
        assert!((ei(40.000_001) / 6.039_724_148_245_77e15 - 1.0).abs() < 1e-13);
        assert!((e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((e1(1.0 + 1e-12) - e1(1.0)).abs() < 1e-11);
    }
}
