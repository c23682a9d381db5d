//! Standard normal density, distribution and quantile functions.
//!
//! The quantile is the one special function shared by every module; p-values
//! are mapped to z-scores through it and all integrals are carried out in
//! z-space.

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// z-scores are clamped to this magnitude so that p-values of exactly 0 or 1
/// still map to finite points.
pub const Z_CLAMP: f64 = 38.0;

#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(z)`, accurate for large positive `z`.
#[inline]
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Probability mass of `N(mean, 1)` on `[a, b]`, computed on the short tail
/// to avoid cancellation.
#[inline]
pub fn mass(a: f64, b: f64, mean: f64) -> f64 {
    let (a, b) = (a - mean, b - mean);
    if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        cdf(b) - cdf(a)
    } else {
        1.0 - cdf(a) - sf(b)
    }
}

/// Standard normal quantile. Returns `-inf` at 0 and `+inf` at 1.
///
/// The inverse complementary error function gives about ten correct digits;
/// one Newton step on the tail that is computed without cancellation brings
/// the round trip to machine precision.
#[inline]
pub fn quantile(p: f64) -> f64 {
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    let d = pdf(z);
    if d == 0.0 {
        return z;
    }
    if p <= 0.5 {
        z - (cdf(z) - p) / d
    } else {
        // 1 - p is exact for p in [0.5, 1].
        z + (sf(z) - (1.0 - p)) / d
    }
}

/// Quantile clamped to `[-Z_CLAMP, Z_CLAMP]`.
#[inline]
pub fn z_score(p: f64) -> f64 {
    quantile(p).clamp(-Z_CLAMP, Z_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_quantiles() {
        assert_abs_diff_eq!(quantile(0.05), -1.644_853_626_951_472_2, epsilon = 1e-13);
        assert_abs_diff_eq!(quantile(0.001), -3.090_232_306_167_813_5, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile(0.5), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(0.9), 1.281_551_565_544_600_5, epsilon = 1e-13);
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(quantile(1.0), f64::INFINITY);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for &p in &[1e-300, 1e-12, 1e-6, 1e-4, 0.0167, 0.3, 0.5, 0.77] {
            let z = quantile(p);
            assert!((cdf(z) - p).abs() <= 1e-13 * p, "p = {p}");
        }
    }

    #[test]
    fn upper_tail_round_trip() {
        for &q in &[1e-15, 1e-9, 1e-3] {
            let z = quantile(1.0 - q);
            assert!((sf(z) - (1.0 - (1.0 - q))).abs() <= 1e-13 * q.max(1e-16) + 1e-30, "q = {q}");
        }
    }

    #[test]
    fn mass_matches_cdf_difference() {
        assert_abs_diff_eq!(mass(-1.0, 2.0, 0.5), cdf(1.5) - cdf(-1.5), epsilon = 1e-15);
        assert_abs_diff_eq!(mass(f64::NEG_INFINITY, f64::INFINITY, -3.0), 1.0, epsilon = 1e-15);
        assert!(mass(9.0, 10.0, 0.0) > 0.0);
    }
}
