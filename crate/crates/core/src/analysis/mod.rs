//! Quantitative layer: pass probabilities, noise-response fits, the maximin
//! mixing program, spectral gaps and sample complexity.

pub mod complexity;
pub mod fit;
pub mod gap;
pub mod lp;
pub mod noise;
pub mod oracle;

pub use complexity::{sample_complexity, SampleComplexity};
pub use fit::{fit_noise_response, fit_slope, FamilySamples, NoiseResponse};
pub use gap::{spectral_gap, EigenMethod, SpectralGap};
pub use lp::{optimize_mu, OptimizationResult};
pub use noise::{calibrate_kappa_grid, kappa_for_infidelity, reference_families, CoherentTemplate, KappaCalibration, NoisyFamily, TemplateTerm};
pub use oracle::pass_probability_exact;

use crate::error::Result;
use crate::fock::{fidelity, ModeState};
use crate::protocols::{MeasurementSetting, VerificationStrategy};
use crate::scalar::Real;

/// Anything with a probability of passing a given state.
pub trait PassingTest<T: Real> {
    fn pass_probability(&self, state: &ModeState<T>) -> Result<T>;
}

impl<T: Real> PassingTest<T> for MeasurementSetting<T> {
    fn pass_probability(&self, state: &ModeState<T>) -> Result<T> {
        MeasurementSetting::pass_probability(self, state)
    }
}

impl<T: Real> PassingTest<T> for VerificationStrategy<T> {
    fn pass_probability(&self, state: &ModeState<T>) -> Result<T> {
        VerificationStrategy::pass_probability(self, state)
    }
}

/// `tr(Ω |ψ><ψ|)` for a single setting or a whole strategy.
pub fn passing_probability<T: Real, P: PassingTest<T>>(test: &P, state: &ModeState<T>) -> Result<T> {
    test.pass_probability(state)
}

/// `1 − |<target|state>|²`, clamped to `[0, 1]`.
pub fn infidelity<T: Real>(state: &ModeState<T>, target: &ModeState<T>) -> Result<T> {
    Ok((T::one() - fidelity(state, target)?).max(T::zero()).min(T::one()))
}
