//! Standard normal density, distribution and log-distribution functions.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `ln Φ` switches to the asymptotic tail series.
const LOG_CDF_TAIL: f64 = -30.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, finite for every finite `x` and accurate deep into the lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        // Φ(x) = 1 - Φ(-x); ln_1p keeps the tiny complement.
        return (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p();
    }
    if x > LOG_CDF_TAIL {
        return cdf(x).ln();
    }
    // Mills-ratio expansion: Φ(x) ~ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸)
    let x2 = x * x;
    let inv = 1.0 / x2;
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
}

/// `ln(Φ(x)(1 - Φ(x)))` evaluated without cancellation.
pub fn log_cdf_times_survival(x: f64) -> f64 {
    log_cdf(x) + log_cdf(-x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-14);
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn log_cdf_tail_matches_high_precision_reference() {
        // Reference values from 50-digit mpmath evaluation of log(ncdf(x)).
        let cases = [
            (-8.0, -35.013_437_159_914_55),
            (-20.0, -203.917_155_371_097_5),
            (-29.9, -451.322_912_458_528_6),
            (-30.1, -457.329_564_416_382_26),
            (-40.0, -804.608_442_013_754_3),
            (5.0, -2.866_516_129_637_636e-7),
        ];
        for (x, expected) in cases {
            let got = log_cdf(x);
            assert!(
                ((got - expected) / expected).abs() < 1e-12,
                "log_cdf({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn log_cdf_continuous_across_tail_switch() {
        let below = log_cdf(LOG_CDF_TAIL - 1e-9);
        let above = log_cdf(LOG_CDF_TAIL + 1e-9);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn log_cdf_limits() {
        assert_eq!(log_cdf(f64::INFINITY), 0.0);
        assert_eq!(log_cdf(f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!(log_cdf(-1e6).is_finite());
    }
}
