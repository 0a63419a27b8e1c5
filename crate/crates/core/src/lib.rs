//! Verification of entangled continuous-variable states with local
//! displacements and photon detectors, in truncated Fock space.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod analysis;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod operators;
pub mod protocols;
pub mod scalar;
pub mod simulate;
pub mod states;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Complex32 = C<f32>;
pub type ModeState64 = fock::ModeState<f64>;
pub type ModeState32 = fock::ModeState<f32>;
pub type Truncation64 = fock::TruncationConfig<f64>;
pub type Truncation32 = fock::TruncationConfig<f32>;
pub type StateSpec64 = states::StateSpec<f64>;
pub type StateSpec32 = states::StateSpec<f32>;
pub type Operator64 = operators::ModeOperator<f64>;
pub type Operator32 = operators::ModeOperator<f32>;
pub type Strategy64 = protocols::VerificationStrategy<f64>;
pub type Strategy32 = protocols::VerificationStrategy<f32>;
