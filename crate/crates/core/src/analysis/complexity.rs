//! Number of all-pass rounds needed to reject ε-far states with confidence
//! `1 − δ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// Smallest `N` with `(1 − νε)^N <= δ`.
    pub n_exact: u64,
    /// `ln δ⁻¹ / ln((1 − νε)⁻¹)` before rounding up.
    pub bound: f64,
    /// First-order form `ln δ⁻¹ / (νε)`.
    pub n_approx: f64,
}

/// Evaluates the exact bound and its first-order approximation. The exact
/// bound never exceeds `n_approx`, and `n_approx` exceeds it by at most a
/// factor `1 + νε`.
///
/// Ratios within `1e-12` (relative) of an integer are rounded to that integer
/// so that exact cases such as `ν = 1, ε = δ = 1/2` give `N = 1`.
pub fn sample_complexity(nu: f64, epsilon: f64, delta: f64) -> Result<SampleComplexity> {
    let open = |x: f64| x > 0.0 && x < 1.0;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::BadRange(format!("spectral gap {nu} must lie in (0, 1]")));
    }
    if !open(epsilon) {
        return Err(Error::BadRange(format!("infidelity {epsilon} must lie in (0, 1)")));
    }
    if !open(delta) {
        return Err(Error::BadRange(format!("confidence parameter {delta} must lie in (0, 1)")));
    }
    let x = nu * epsilon;
    let log_delta = -delta.ln();
    let bound = log_delta / -(-x).ln_1p();
    let nearest = bound.round();
    let n = if (bound - nearest).abs() <= 1e-12 * bound.max(1.0) { nearest } else { bound.ceil() };
    Ok(SampleComplexity { n_exact: n.max(1.0) as u64, bound, n_approx: log_delta / x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_half_case() {
        assert_eq!(sample_complexity(1.0, 0.5, 0.5).unwrap().n_exact, 1);
    }

    #[test]
    fn reference_rounds() {
        let s = sample_complexity(0.4026, 0.01, 0.01).unwrap();
        assert_eq!(s.n_exact, 1142);
        assert!((s.n_approx - 100.0f64.ln() / 0.004026).abs() < 1e-9);
    }

    #[test]
    fn range_checks() {
        for (n, e, d) in [(0.0, 0.1, 0.1), (1.2, 0.1, 0.1), (0.5, 0.0, 0.1), (0.5, 1.5, 0.1), (0.5, 0.1, 1.0), (0.5, 0.1, 0.0)] {
            assert!(matches!(sample_complexity(n, e, d), Err(Error::BadRange(_))));
        }
    }

    proptest! {
        #[test]
        fn bound_is_sandwiched(nu in 1e-3f64..=1.0, eps in 1e-4f64..0.99, delta in 1e-6f64..0.999) {
            let s = sample_complexity(nu, eps, delta).unwrap();
            prop_assert!(s.bound <= s.n_approx * (1.0 + 1e-12));
            prop_assert!(s.bound >= s.n_approx / (1.0 + nu * eps) * (1.0 - 1e-12) || nu * eps > 0.5);
            prop_assert!((1.0 - nu * eps).powf(s.n_exact as f64) <= delta * (1.0 + 1e-9));
        }

        #[test]
        fn monotone_in_each_argument(nu in 0.01f64..0.9, eps in 1e-3f64..0.5, delta in 1e-4f64..0.5, f in 1.01f64..1.1) {
            let base = sample_complexity(nu, eps, delta).unwrap().n_exact;
            prop_assert!(sample_complexity(nu * f, eps, delta).unwrap().n_exact <= base);
            prop_assert!(sample_complexity(nu, eps * f, delta).unwrap().n_exact <= base);
            prop_assert!(sample_complexity(nu, eps, delta * f).unwrap().n_exact <= base);
        }
    }
}
