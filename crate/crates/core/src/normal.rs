//! Standard normal density, distribution and interval helpers.
//!
//! Tail probabilities are evaluated through `erfc` on the side of the
//! distribution where they are small, so cell probabilities far out in a
//! tail keep full relative precision instead of cancelling to zero.

use std::f64::consts::FRAC_1_SQRT_2;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(z). Returns 0 for infinite arguments.
#[inline]
pub fn pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function Φ(z).
#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(z), accurate for large positive `z`.
#[inline]
pub fn sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// P(lo < Z ≤ hi) for a standard normal Z, computed on the tail side.
#[inline]
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let p = if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - sf(hi) - cdf(lo)
    };
    p.max(0.0)
}

/// `z·φ(z)`, with the limit 0 at ±∞.
#[inline]
pub fn z_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        z * pdf(z)
    }
}

/// Inverse of Φ by bracketing bisection refined with Newton steps.
///
/// Only used to seed grids, so it trades speed for simplicity; the result is
/// accurate to a few ulps for `p` in `(1e-300, 1 - 1e-16)`.
pub fn inverse_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse_cdf needs p in (0, 1), got {p}");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = pdf(z);
        if d <= 0.0 {
            break;
        }
        let step = (cdf(z) - p) / d;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

/// Black–Scholes price of a European call with continuous rate `r`.
pub fn black_scholes_call(spot: f64, strike: f64, rate: f64, vol: f64, maturity: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let df = (-rate * maturity).exp();
    if sd <= 0.0 {
        return (spot - strike * df).max(0.0);
    }
    let d1 = ((spot / strike).ln() + rate * maturity) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    spot * cdf(d1) - strike * df * cdf(d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_sf_are_complementary() {
        for &z in &[-9.0, -3.0, -0.5, 0.0, 0.7, 4.0, 10.0] {
            assert!((cdf(z) + sf(z) - 1.0).abs() < 1e-15);
        }
        assert_eq!(cdf(0.0), 0.5);
    }

    #[test]
    fn far_tail_interval_keeps_precision() {
        // 1 − Φ(9) ≈ 1.1286e-19; a naive Φ(10) − Φ(9) would be 0.
        let p = interval_prob(9.0, 10.0);
        assert!((p / 1.128_588_e-19 - 1.0).abs() < 1e-3, "{p}");
        assert_eq!(interval_prob(f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn inverse_round_trips() {
        for &p in &[1e-12, 0.001, 0.25, 0.5, 0.9, 0.999_999] {
            let z = inverse_cdf(p);
            assert!((cdf(z) - p).abs() <= 1e-14 * p.max(1e-3), "p={p}");
        }
    }

    #[test]
    fn black_scholes_atm() {
        // 2Φ(σ√T/2) − 1 at zero rate.
        let c = black_scholes_call(1.0, 1.0, 0.0, 0.2, 0.5);
        let expected = 2.0 * cdf(0.5 * 0.2 * 0.5f64.sqrt()) - 1.0;
        assert!((c - expected).abs() < 1e-15);
        assert!((c - 0.056_372).abs() < 1e-6);
    }
}
