//! The SINR-alignment function `f_a(x) = (1+x) ln(1+x) - x` and its inverse.
//!
//! At the optimum every allocated user satisfies `n_i f_a(x_i) = Λ_a`, so the
//! whole per-user SINR profile is recovered from one scalar through
//! [`f_a_inv`].

use super::SolveError;

/// Below this the closed form loses too many digits to cancellation.
const SERIES_CUTOFF: f64 = 0.25;

/// `f_a(x)` for `x >= 0`.
pub fn f_a(x: f64) -> Result<f64, SolveError> {
    if !x.is_finite() || x < 0.0 {
        return Err(SolveError::Domain(format!("f_a requires finite x >= 0, got {x}")));
    }
    Ok(f_a_unchecked(x))
}

/// `f_a` without argument validation. Callers guarantee `x >= 0`.
#[inline]
pub(crate) fn f_a_unchecked(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        series(x)
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// `sum_{k>=2} (-1)^k x^k / (k (k-1))`, the Taylor expansion of `f_a`.
fn series(x: f64) -> f64 {
    let mut pow = x * x;
    let mut sum = 0.0;
    let mut k = 2.0_f64;
    let mut sign = 1.0;
    loop {
        let term = sign * pow / (k * (k - 1.0));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 80.0 {
            break;
        }
        pow *= x;
        k += 1.0;
        sign = -sign;
    }
    sum
}

/// Inverse of [`f_a`] on `[0, inf)`.
///
/// Safeguarded Newton: `f_a'(x) = ln(1+x)` is positive and `f_a` is convex, so
/// iterates that land outside the current bracket are replaced by a bisection
/// step and convergence is to full double precision.
pub fn f_a_inv(y: f64) -> Result<f64, SolveError> {
    if !y.is_finite() || y < 0.0 {
        return Err(SolveError::Domain(format!("f_a_inv requires finite y >= 0, got {y}")));
    }
    Ok(f_a_inv_unchecked(y))
}

pub(crate) fn f_a_inv_unchecked(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    // f_a(x) <= x^2 / 2, hence the root is at least sqrt(2y).
    let mut lo = (2.0 * y).sqrt();
    if f_a_unchecked(lo) >= y {
        return lo;
    }
    let mut hi = lo.max(y).max(1.0);
    while f_a_unchecked(hi) < y {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = y.max(lo).min(hi);
    for _ in 0..200 {
        let residual = f_a_unchecked(x) - y;
        if residual == 0.0 {
            return x;
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = x.ln_1p();
        let mut next = x - residual / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn f_a_reference_points() {
        assert_eq!(f_a(0.0).unwrap(), 0.0);
        assert!((f_a(E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((f_a(1.0).unwrap() - (2.0 * LN_2 - 1.0)).abs() < 1e-15);
        assert!((f_a(1.0).unwrap() - 0.3862944).abs() < 1e-7);
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        let x = SERIES_CUTOFF;
        let closed = (1.0 + x) * x.ln_1p() - x;
        // 0.0289294391427621947... from a 30-digit evaluation
        assert!((series(x) - 0.028929439142762195).abs() <= 1e-16);
        assert!((series(x) - closed).abs() <= 1e-14 * closed);
    }

    #[test]
    fn small_argument_is_quadratic() {
        let x = 1e-9;
        let leading = x * x / 2.0 - x * x * x / 6.0;
        assert!((f_a(x).unwrap() - leading).abs() <= 1e-15 * leading);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(f_a(-1e-3).is_err());
        assert!(f_a(f64::NAN).is_err());
        assert!(f_a(f64::INFINITY).is_err());
        assert!(f_a_inv(-1.0).is_err());
        assert!(f_a_inv(f64::NAN).is_err());
    }

    #[test]
    fn inverse_reference_points() {
        assert_eq!(f_a_inv(0.0).unwrap(), 0.0);
        assert!((f_a_inv(1.0).unwrap() - (E - 1.0)).abs() < 1e-14);
    }

    /// Plain bisection on `f_a(x) = target`, kept independent of the Newton path.
    fn bisect_root(target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while (1.0 + hi) * hi.ln_1p() - hi < target {
            hi *= 2.0;
        }
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if (1.0 + mid) * mid.ln_1p() - mid < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverse_matches_bisection_oracle() {
        let oracle = bisect_root(0.3862944);
        // Frozen from the oracle: 0.99999990...
        assert!((oracle - 1.0).abs() < 1e-6);
        let got = f_a_inv(0.3862944).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn inverse_residual_meets_tolerance() {
        for &y in &[1e-300, 1e-30, 1e-12, 1e-6, 0.01, 0.5, 3.0, 1e3, 1e9, 1e200] {
            let x = f_a_inv(y).unwrap();
            let r = (f_a(x).unwrap() - y).abs();
            assert!(r <= 1e-12_f64.max(1e-10 * y), "y={y} x={x} r={r}");
        }
    }
}
