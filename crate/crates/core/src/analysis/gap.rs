//! Second-largest eigenvalue of a strategy's mixed operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::poisson_tail;
use crate::linalg::{hermitian_eigenvalues, lanczos_top};
use crate::protocols::VerificationStrategy;
use crate::scalar::Real;

/// Systems up to this many amplitudes are diagonalized densely.
pub const DENSE_LIMIT: usize = 1200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap<T> {
    pub lambda_max: T,
    pub lambda2: T,
    /// `1 − λ₂`.
    pub nu: T,
    /// Largest Poisson tail beyond the cutoff among the displacements the
    /// settings use. The truncated eigenvalues describe the untruncated
    /// operator only up to perturbations of this order.
    pub truncation_tail: T,
    pub method: EigenMethod,
    /// Lanczos residual bound on `λ₂` (zero for dense solves).
    pub residual: T,
}

/// Eigenvalues of `Ω = Σ μ_l Ω_l` in the truncated space: dense Householder
/// plus QL for small systems, Lanczos with full reorthogonalization otherwise.
pub fn spectral_gap<T: Real>(strategy: &VerificationStrategy<T>) -> Result<SpectralGap<T>> {
    let omega = strategy.mixed_operator();
    let n = omega.space_size();
    let dim = strategy.dim();
    let truncation_tail = strategy
        .settings()
        .iter()
        .flat_map(|s| s.recipe.displacements.iter())
        .map(|a| poisson_tail(a.norm_sqr(), dim))
        .fold(T::zero(), T::max);
    if n < 2 {
        return Err(Error::ShapeMismatch("spectral gap needs at least two levels".into()));
    }
    let (values, residual, method) = if n <= DENSE_LIMIT {
        (hermitian_eigenvalues(&omega.to_dense())?, T::zero(), EigenMethod::Dense)
    } else {
        let res = lanczos_top(n, 2, |v| omega.apply(v), T::tol(1e-10), n.min(600), 0x9a9)?;
        let r = res.residuals[1];
        (res.values, r, EigenMethod::Lanczos)
    };
    let lambda_max = values[0];
    let lambda2 = values[1];
    Ok(SpectralGap { lambda_max, lambda2, nu: T::one() - lambda2, truncation_tail, method, residual })
}
