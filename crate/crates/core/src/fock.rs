//! Truncated Fock-space representation of bosonic modes.
//!
//! A state of `m` modes is a dense amplitude tensor of extent `dim` per mode,
//! stored flat with mode 0 as the slowest-varying index (the leftmost ket).

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr};
use crate::scalar::{cr, Real, C};

/// Fock levels kept per mode and the largest probability mass that may be
/// dropped above the cutoff when building a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig<T> {
    dim_per_mode: usize,
    tail_tolerance: T,
}

impl<T: Real> TruncationConfig<T> {
    pub fn new(dim_per_mode: usize, tail_tolerance: T) -> Result<Self> {
        if dim_per_mode < 2 {
            return Err(Error::BadTruncation(format!("dim_per_mode must be >= 2, got {dim_per_mode}")));
        }
        if !(tail_tolerance >= T::zero() && tail_tolerance < T::one()) {
            return Err(Error::BadTruncation(format!("tail_tolerance must lie in [0, 1), got {tail_tolerance}")));
        }
        Ok(Self { dim_per_mode, tail_tolerance })
    }

    /// Cutoff large enough that a coherent amplitude of modulus `max_amplitude`
    /// loses less than ~1e-12 of its mass: `max(16, ceil(|a|^2 + 6|a| + 10))`.
    pub fn for_amplitude(max_amplitude: T, tail_tolerance: T) -> Result<Self> {
        Self::new(default_dim(max_amplitude.to_f64_lossy()), tail_tolerance)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim_per_mode
    }

    #[inline]
    pub fn tail_tolerance(&self) -> T {
        self.tail_tolerance
    }

    /// Number of amplitudes for `num_modes` modes.
    pub fn space_size(&self, num_modes: usize) -> usize {
        self.dim_per_mode.pow(num_modes as u32)
    }
}

/// Default cutoff rule for the largest coherent amplitude of a scenario.
pub fn default_dim(max_amplitude: f64) -> usize {
    let a = max_amplitude.abs();
    let rule = (a * a + 6.0 * a + 10.0).ceil() as usize;
    rule.max(16)
}

/// Truncation bookkeeping carried by every state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics<T> {
    /// Squared norm before the explicit normalization step.
    pub raw_norm_sqr: T,
    /// Largest coherent-state tail mass discarded while building the state.
    pub tail_mass: T,
}

impl<T: Real> Default for StateDiagnostics<T> {
    fn default() -> Self {
        Self { raw_norm_sqr: T::one(), tail_mass: T::zero() }
    }
}

/// Pure state of one or more truncated modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeState<T> {
    num_modes: usize,
    amplitudes: Vec<C<T>>,
    truncation: TruncationConfig<T>,
    diagnostics: StateDiagnostics<T>,
}

impl<T: Real> ModeState<T> {
    /// Wraps raw amplitudes without normalizing them.
    pub fn from_amplitudes(num_modes: usize, amplitudes: Vec<C<T>>, truncation: TruncationConfig<T>) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::ShapeMismatch("a state needs at least one mode".into()));
        }
        let expected = truncation.space_size(num_modes);
        if amplitudes.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{num_modes} modes at dim {} need {expected} amplitudes, got {}",
                truncation.dim(),
                amplitudes.len()
            )));
        }
        let raw = norm_sqr(&amplitudes);
        Ok(Self { num_modes, amplitudes, truncation, diagnostics: StateDiagnostics { raw_norm_sqr: raw, tail_mass: T::zero() } })
    }

    pub fn vacuum(num_modes: usize, truncation: TruncationConfig<T>) -> Self {
        let mut amps = vec![C::zero(); truncation.space_size(num_modes)];
        amps[0] = cr(T::one());
        Self { num_modes, amplitudes: amps, truncation, diagnostics: StateDiagnostics::default() }
    }

    /// Single-mode Fock ket `|n>`.
    pub fn fock(n: usize, truncation: TruncationConfig<T>) -> Result<Self> {
        if n >= truncation.dim() {
            return Err(Error::ShapeMismatch(format!("Fock level {n} outside dim {}", truncation.dim())));
        }
        let mut amps = vec![C::zero(); truncation.dim()];
        amps[n] = cr(T::one());
        Ok(Self { num_modes: 1, amplitudes: amps, truncation, diagnostics: StateDiagnostics::default() })
    }

    /// Rescales to unit norm, recording the pre-normalization squared norm.
    pub fn normalized(mut self) -> Result<Self> {
        let raw = norm_sqr(&self.amplitudes);
        if !(raw > T::zero()) || !raw.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize a state with squared norm {raw}")));
        }
        let s = cr(T::one() / raw.sqrt());
        self.amplitudes.iter_mut().for_each(|z| *z = *z * s);
        self.diagnostics.raw_norm_sqr = raw;
        Ok(self)
    }

    pub(crate) fn with_tail_mass(mut self, tail: T) -> Self {
        self.diagnostics.tail_mass = tail;
        self
    }

    pub(crate) fn with_diagnostics(mut self, d: StateDiagnostics<T>) -> Self {
        self.diagnostics = d;
        self
    }

    #[inline]
    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.truncation.dim()
    }

    #[inline]
    pub fn truncation(&self) -> &TruncationConfig<T> {
        &self.truncation
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amplitudes
    }

    #[inline]
    pub fn diagnostics(&self) -> &StateDiagnostics<T> {
        &self.diagnostics
    }

    /// Replaces the amplitude vector, keeping shape and diagnostics.
    pub(crate) fn map_amplitudes(&self, amplitudes: Vec<C<T>>) -> Self {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        Self { amplitudes, ..self.clone() }
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.amplitudes)
    }

    /// Amplitude at the Fock multi-index `levels` (one entry per mode).
    pub fn amplitude(&self, levels: &[usize]) -> C<T> {
        self.amplitudes[flat_index(levels, self.dim())]
    }

    /// Photon-number distribution of one mode (other modes traced out).
    pub fn photon_distribution(&self, mode: usize) -> Vec<T> {
        let d = self.dim();
        let stride = d.pow((self.num_modes - 1 - mode) as u32);
        let mut p = vec![T::zero(); d];
        for (i, z) in self.amplitudes.iter().enumerate() {
            p[(i / stride) % d] += z.norm_sqr();
        }
        p
    }

    pub fn mean_photon_number(&self, mode: usize) -> T {
        self.photon_distribution(mode)
            .iter()
            .enumerate()
            .map(|(n, &p)| p * T::from_usize_lossy(n))
            .sum::<T>()
            / self.norm_sqr()
    }

    /// Probability weight in the top Fock level of any mode; a cheap
    /// indicator that the cutoff is too small for this state.
    pub fn edge_weight(&self) -> T {
        (0..self.num_modes)
            .map(|m| *self.photon_distribution(m).last().expect("dim >= 2"))
            .fold(T::zero(), T::max)
    }
}

/// Flat position of a Fock multi-index, mode 0 slowest.
pub fn flat_index(levels: &[usize], dim: usize) -> usize {
    levels.iter().fold(0, |acc, &n| acc * dim + n)
}

/// Inverse of [`flat_index`].
pub fn digits(mut index: usize, num_modes: usize, dim: usize) -> Vec<usize> {
    let mut out = vec![0; num_modes];
    for k in (0..num_modes).rev() {
        out[k] = index % dim;
        index /= dim;
    }
    out
}

/// Probability mass a coherent state of mean photon number `mean` places on
/// levels `>= dim`, summed directly from the Poisson tail.
pub fn poisson_tail<T: Real>(mean: T, dim: usize) -> T {
    if mean <= T::zero() {
        return T::zero();
    }
    // log of the first dropped term, e^{-x} x^dim / dim!
    let mut log_term = -mean + T::from_usize_lossy(dim) * mean.ln();
    for k in 1..=dim {
        log_term -= T::from_usize_lossy(k).ln();
    }
    let mut term = log_term.exp();
    let mut sum = T::zero();
    let mut n = dim;
    let cap = dim + 400 + 4 * mean.to_f64_lossy().ceil() as usize;
    while n < cap {
        sum += term;
        n += 1;
        term = term * mean / T::from_usize_lossy(n);
        if T::from_usize_lossy(n) > mean && term <= sum * T::epsilon() * T::lit(1e-3) {
            break;
        }
    }
    sum
}

/// Truncated amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)` for `n < dim`, without
/// renormalization, together with the discarded tail mass.
pub fn coherent_amplitudes<T: Real>(alpha: C<T>, dim: usize) -> (Vec<C<T>>, T) {
    let x = alpha.norm_sqr();
    let mut amps = Vec::with_capacity(dim);
    let mut term = cr((-x / T::lit(2.0)).exp());
    for n in 0..dim {
        if n > 0 {
            term = term * alpha / cr(T::from_usize_lossy(n).sqrt());
        }
        amps.push(term);
    }
    (amps, poisson_tail(x, dim))
}

/// Single-mode coherent state `|alpha>`, renormalized inside the cutoff.
pub fn coherent_state<T: Real>(alpha: C<T>, trunc: TruncationConfig<T>) -> Result<ModeState<T>> {
    let (amps, tail) = coherent_amplitudes(alpha, trunc.dim());
    check_tail(tail, &trunc)?;
    Ok(ModeState::from_amplitudes(1, amps, trunc)?.normalized()?.with_tail_mass(tail))
}

pub(crate) fn check_tail<T: Real>(tail: T, trunc: &TruncationConfig<T>) -> Result<()> {
    if tail > trunc.tail_tolerance() {
        return Err(Error::TailTooLarge {
            mass: tail.to_f64_lossy(),
            tolerance: trunc.tail_tolerance().to_f64_lossy(),
            dim: trunc.dim(),
        });
    }
    Ok(())
}

/// Kronecker product of states; the first element becomes mode 0.
pub fn tensor<T: Real>(states: &[ModeState<T>]) -> Result<ModeState<T>> {
    let first = states.first().ok_or_else(|| Error::ShapeMismatch("tensor of an empty list".into()))?;
    if states.iter().any(|s| s.truncation != first.truncation) {
        return Err(Error::MixedTruncation);
    }
    let mut amps = first.amplitudes.clone();
    let mut modes = first.num_modes;
    let mut raw = first.diagnostics.raw_norm_sqr;
    let mut tail = first.diagnostics.tail_mass;
    for s in &states[1..] {
        let mut next = Vec::with_capacity(amps.len() * s.amplitudes.len());
        for &a in &amps {
            next.extend(s.amplitudes.iter().map(|&b| a * b));
        }
        amps = next;
        modes += s.num_modes;
        raw *= s.diagnostics.raw_norm_sqr;
        tail = tail.max(s.diagnostics.tail_mass);
    }
    Ok(ModeState {
        num_modes: modes,
        amplitudes: amps,
        truncation: first.truncation,
        diagnostics: StateDiagnostics { raw_norm_sqr: raw, tail_mass: tail },
    })
}

fn check_same_shape<T: Real>(a: &ModeState<T>, b: &ModeState<T>) -> Result<()> {
    if a.num_modes != b.num_modes || a.amplitudes.len() != b.amplitudes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} modes (len {}) vs {} modes (len {})",
            a.num_modes,
            a.amplitudes.len(),
            b.num_modes,
            b.amplitudes.len()
        )));
    }
    Ok(())
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn overlap<T: Real>(a: &ModeState<T>, b: &ModeState<T>) -> Result<C<T>> {
    check_same_shape(a, b)?;
    Ok(inner(&a.amplitudes, &b.amplitudes))
}

/// `|<a|b>|^2`; global phases drop out.
pub fn fidelity<T: Real>(a: &ModeState<T>, b: &ModeState<T>) -> Result<T> {
    Ok(overlap(a, b)?.norm_sqr())
}

/// Analytic coherent-state overlap `<a|b> = exp(-|a|^2/2 - |b|^2/2 + conj(a) b)`.
pub fn coherent_overlap_exact<T: Real>(a: C<T>, b: C<T>) -> C<T> {
    let half = T::lit(0.5);
    (a.conj() * b - cr(half * a.norm_sqr() + half * b.norm_sqr())).exp()
}
