//! Standard normal distribution functions.

use statrs::distribution::{ContinuousCDF, Normal};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(Z <= x)` for standard normal `Z`.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// `P(a < Z < b)`, evaluated on the tail that keeps precision.
pub fn prob_between(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let p = if a > 0.0 { cdf(-a) - cdf(-b) } else { cdf(b) - cdf(a) };
    p.clamp(0.0, 1.0)
}

/// Inverse of [`cdf`]. Returns infinities at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((quantile(0.995) - 2.5758293035489004).abs() < 1e-12);
        assert!((prob_between(8.0, 9.0) - 6.21983198586583e-16).abs() < 1e-27);
        assert_eq!(prob_between(1.0, 1.0), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!((cdf(quantile(p)) - p).abs() < 1e-14);
        }
    }
}
