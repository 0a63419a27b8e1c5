//! Target-state families built from coherent states, and the local
//! transformations that bring the general two-branch families to canonical
//! form.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_tail, coherent_amplitudes, coherent_overlap_exact, tensor, ModeState, StateDiagnostics, TruncationConfig};
use crate::operators::{beam_splitter_apply, displace_modes, Sign};
use crate::scalar::{cr, Real, C};

/// Finite superposition `Σ_j c_j ⊗_k |a_{jk}>` of coherent product states.
///
/// This is the common currency between the truncated-space numerics and the
/// analytic Gram-matrix evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentSuperposition<T> {
    pub terms: Vec<(C<T>, Vec<C<T>>)>,
}

impl<T: Real> CoherentSuperposition<T> {
    pub fn new(terms: Vec<(C<T>, Vec<C<T>>)>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::BadSpec("superposition without terms".into()))?;
        let m = first.1.len();
        if m == 0 || terms.iter().any(|(_, a)| a.len() != m) {
            return Err(Error::BadSpec("every term needs the same, nonzero number of modes".into()));
        }
        Ok(Self { terms })
    }

    pub fn num_modes(&self) -> usize {
        self.terms[0].1.len()
    }

    /// Largest coherent amplitude appearing in any term.
    pub fn max_amplitude(&self) -> T {
        self.terms.iter().flat_map(|(_, a)| a.iter()).map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// `⊗ D(shift_k)` applied term by term, keeping the phases
    /// `D(s)|a> = e^{i Im(s conj(a))} |a + s>`.
    pub fn displaced(&self, shifts: &[C<T>]) -> Result<Self> {
        if shifts.len() != self.num_modes() {
            return Err(Error::ShapeMismatch(format!("{} shifts for {} modes", shifts.len(), self.num_modes())));
        }
        let terms = self
            .terms
            .iter()
            .map(|(coeff, amps)| {
                let phase: T = shifts.iter().zip(amps).map(|(s, a)| (s * a.conj()).im).sum();
                let moved = amps.iter().zip(shifts).map(|(a, s)| a + s).collect();
                (coeff * C::new(T::zero(), phase).exp(), moved)
            })
            .collect();
        Ok(Self { terms })
    }

    /// Exact `<self|other>` in the untruncated space.
    pub fn inner_exact(&self, other: &Self) -> C<T> {
        let mut acc = C::zero();
        for (ci, ai) in &self.terms {
            for (cj, aj) in &other.terms {
                let prod = ai.iter().zip(aj).fold(C::one(), |p, (&a, &b)| p * coherent_overlap_exact(a, b));
                acc += ci.conj() * cj * prod;
            }
        }
        acc
    }

    /// Exact squared norm of the unnormalized superposition.
    pub fn norm_sqr_exact(&self) -> T {
        self.inner_exact(self).re
    }

    /// Truncated amplitudes of the unnormalized sum and the largest per-mode
    /// tail mass that was dropped.
    pub fn raw_amplitudes(&self, trunc: &TruncationConfig<T>) -> Result<(Vec<C<T>>, T)> {
        let d = trunc.dim();
        let m = self.num_modes();
        let mut out = vec![C::zero(); trunc.space_size(m)];
        let mut worst = T::zero();
        for (coeff, amps) in &self.terms {
            let mut prod = vec![*coeff];
            for &a in amps {
                let (mode, tail) = coherent_amplitudes(a, d);
                check_tail(tail, trunc)?;
                worst = worst.max(tail);
                let mut next = Vec::with_capacity(prod.len() * d);
                for &p in &prod {
                    next.extend(mode.iter().map(|&z| p * z));
                }
                prod = next;
            }
            for (o, p) in out.iter_mut().zip(prod) {
                *o += p;
            }
        }
        Ok((out, worst))
    }

    /// Normalized truncated state. The recorded raw norm is that of the
    /// truncated sum, to be compared against [`Self::norm_sqr_exact`].
    pub fn to_state(&self, trunc: TruncationConfig<T>) -> Result<ModeState<T>> {
        let exact = self.norm_sqr_exact();
        if !(exact > T::tol(1e-24)) {
            return Err(Error::BadSpec("superposition vanishes identically".into()));
        }
        let (amps, tail) = self.raw_amplitudes(&trunc)?;
        let state = ModeState::from_amplitudes(self.num_modes(), amps, trunc)?.normalized()?;
        let raw = state.diagnostics().raw_norm_sqr;
        Ok(state.with_diagnostics(StateDiagnostics { raw_norm_sqr: raw, tail_mass: tail }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateFamily {
    #[serde(rename = "coherent")]
    Coherent,
    #[serde(rename = "cat-even")]
    CatEven,
    #[serde(rename = "cat-odd")]
    CatOdd,
    #[serde(rename = "balanced-css")]
    BalancedCss,
    #[serde(rename = "ecs+")]
    EcsPlus,
    #[serde(rename = "ecs-")]
    EcsMinus,
    #[serde(rename = "ecs-general")]
    EcsGeneral,
    #[serde(rename = "ghz+")]
    GhzPlus,
    #[serde(rename = "ghz-")]
    GhzMinus,
    #[serde(rename = "ghz-general")]
    GhzGeneral,
}

impl StateFamily {
    pub const ALL: [StateFamily; 10] = [
        StateFamily::Coherent,
        StateFamily::CatEven,
        StateFamily::CatOdd,
        StateFamily::BalancedCss,
        StateFamily::EcsPlus,
        StateFamily::EcsMinus,
        StateFamily::EcsGeneral,
        StateFamily::GhzPlus,
        StateFamily::GhzMinus,
        StateFamily::GhzGeneral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StateFamily::Coherent => "coherent",
            StateFamily::CatEven => "cat-even",
            StateFamily::CatOdd => "cat-odd",
            StateFamily::BalancedCss => "balanced-css",
            StateFamily::EcsPlus => "ecs+",
            StateFamily::EcsMinus => "ecs-",
            StateFamily::EcsGeneral => "ecs-general",
            StateFamily::GhzPlus => "ghz+",
            StateFamily::GhzMinus => "ghz-",
            StateFamily::GhzGeneral => "ghz-general",
        }
    }

    /// Sign fixed by the family itself, if any.
    pub fn intrinsic_sign(self) -> Option<Sign> {
        match self {
            StateFamily::CatEven | StateFamily::EcsPlus | StateFamily::GhzPlus => Some(Sign::Plus),
            StateFamily::CatOdd | StateFamily::EcsMinus | StateFamily::GhzMinus => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for StateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::BadSpec(format!("unknown state family '{s}'")))
    }
}

/// A target state: family, complex parameters and (for the general families)
/// the relative sign of the two branches.
///
/// Parameter layout: `coherent`/`cat-*`: `[alpha]`; `balanced-css`:
/// `[alpha, beta]`; `ecs±`: `[alpha, beta]`; `ecs-general`:
/// `[alpha1, alpha2, beta1, beta2]`; `ghz±`: `[alpha_1..alpha_m]`;
/// `ghz-general`: `[alpha_1..alpha_m, beta_1..beta_m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpec<T> {
    pub family: StateFamily,
    pub params: Vec<C<T>>,
    #[serde(default)]
    pub sign: Sign,
}

impl<T: Real> StateSpec<T> {
    pub fn new(family: StateFamily, params: Vec<C<T>>) -> Result<Self> {
        let spec = Self { family, params, sign: family.intrinsic_sign().unwrap_or_default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sign(mut self, sign: Sign) -> Result<Self> {
        if let Some(own) = self.family.intrinsic_sign() {
            if own != sign {
                return Err(Error::BadSpec(format!("family {} has fixed sign {own}", self.family)));
            }
        }
        self.sign = sign;
        Ok(self)
    }

    pub fn coherent(alpha: C<T>) -> Self {
        Self { family: StateFamily::Coherent, params: vec![alpha], sign: Sign::Plus }
    }

    pub fn cat(alpha: C<T>, sign: Sign) -> Self {
        let family = if sign == Sign::Plus { StateFamily::CatEven } else { StateFamily::CatOdd };
        Self { family, params: vec![alpha], sign }
    }

    pub fn ecs(alpha: C<T>, beta: C<T>, sign: Sign) -> Self {
        let family = if sign == Sign::Plus { StateFamily::EcsPlus } else { StateFamily::EcsMinus };
        Self { family, params: vec![alpha, beta], sign }
    }

    pub fn ghz(alphas: Vec<C<T>>, sign: Sign) -> Self {
        let family = if sign == Sign::Plus { StateFamily::GhzPlus } else { StateFamily::GhzMinus };
        Self { family, params: alphas, sign }
    }

    pub fn ecs_general(alphas: [C<T>; 2], betas: [C<T>; 2], sign: Sign) -> Self {
        Self { family: StateFamily::EcsGeneral, params: vec![alphas[0], alphas[1], betas[0], betas[1]], sign }
    }

    pub fn ghz_general(alphas: &[C<T>], betas: &[C<T>], sign: Sign) -> Self {
        let params = alphas.iter().chain(betas).copied().collect();
        Self { family: StateFamily::GhzGeneral, params, sign }
    }

    pub fn balanced_css(alpha: C<T>, beta: C<T>) -> Self {
        Self { family: StateFamily::BalancedCss, params: vec![alpha, beta], sign: Sign::Plus }
    }

    /// Sign actually used when building the state.
    pub fn effective_sign(&self) -> Sign {
        self.family.intrinsic_sign().unwrap_or(self.sign)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.params.len();
        let ok = match self.family {
            StateFamily::Coherent | StateFamily::CatEven | StateFamily::CatOdd => n == 1,
            StateFamily::BalancedCss | StateFamily::EcsPlus | StateFamily::EcsMinus => n == 2,
            StateFamily::EcsGeneral => n == 4,
            StateFamily::GhzPlus | StateFamily::GhzMinus => n >= 2,
            StateFamily::GhzGeneral => n >= 4 && n % 2 == 0,
        };
        if !ok {
            return Err(Error::BadSpec(format!("family {} does not take {n} parameters", self.family)));
        }
        if self.params.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::BadSpec("non-finite parameter".into()));
        }
        if let Some(own) = self.family.intrinsic_sign() {
            if own != self.sign {
                return Err(Error::BadSpec(format!("family {} has fixed sign {own}", self.family)));
            }
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        match self.family {
            StateFamily::Coherent | StateFamily::CatEven | StateFamily::CatOdd | StateFamily::BalancedCss => 1,
            StateFamily::EcsPlus | StateFamily::EcsMinus | StateFamily::EcsGeneral => 2,
            StateFamily::GhzPlus | StateFamily::GhzMinus => self.params.len(),
            StateFamily::GhzGeneral => self.params.len() / 2,
        }
    }

    /// Largest coherent amplitude in the state, for sizing the cutoff.
    pub fn max_amplitude(&self) -> T {
        self.params.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// The state as an unnormalized coherent superposition.
    pub fn superposition(&self) -> Result<CoherentSuperposition<T>> {
        self.validate()?;
        let p = &self.params;
        let s = cr(self.effective_sign().factor::<T>());
        let one = C::one();
        let zero = C::zero();
        let terms = match self.family {
            StateFamily::Coherent => vec![(one, vec![p[0]])],
            StateFamily::CatEven | StateFamily::CatOdd => vec![(one, vec![p[0]]), (s, vec![-p[0]])],
            StateFamily::BalancedCss => vec![(one, vec![p[0]]), (s, vec![p[1]])],
            StateFamily::EcsPlus | StateFamily::EcsMinus => vec![(one, vec![p[0], zero]), (s, vec![zero, p[1]])],
            StateFamily::EcsGeneral => vec![(one, vec![p[0], p[1]]), (s, vec![p[2], p[3]])],
            StateFamily::GhzPlus | StateFamily::GhzMinus => vec![(one, p.clone()), (s, vec![zero; p.len()])],
            StateFamily::GhzGeneral => {
                let m = p.len() / 2;
                vec![(one, p[..m].to_vec()), (s, p[m..].to_vec())]
            }
        };
        CoherentSuperposition::new(terms)
    }
}

/// Squared norm of the unnormalized two-branch sum, e.g. `2(1 ± e^{-2|a|²})`
/// for cats and `2[1 ± e^{-(|a|²+|b|²)/2}]` for the canonical ECS.
pub fn normalization_constant<T: Real>(spec: &StateSpec<T>) -> Result<T> {
    Ok(spec.superposition()?.norm_sqr_exact())
}

/// Builds the normalized truncated state.
pub fn build_state<T: Real>(spec: &StateSpec<T>, trunc: TruncationConfig<T>) -> Result<ModeState<T>> {
    spec.superposition()?.to_state(trunc)
}

/// Local operations mapping a general state onto a canonical family member,
/// with the phase bookkeeping that decides which protocol variant applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport<T> {
    /// Beam-splitter angle applied first (balanced cat states only; the input
    /// is then extended by a vacuum mode).
    pub beam_splitter: Option<T>,
    /// One displacement per mode, applied after the beam splitter.
    pub displacements: Vec<C<T>>,
    pub canonical: StateSpec<T>,
    /// `Σ Im(alpha_i conj(beta_i))`.
    pub phase_sum: T,
    /// `n` with `phase_sum = nπ`.
    pub multiple: i64,
    /// Whether the sum is an even multiple of π, so the plus protocol applies
    /// to a plus-sign input.
    pub strict_constraint_met: bool,
    /// Protocol variant that verifies the transformed state.
    pub protocol: Sign,
}

pub const PHASE_TOLERANCE: f64 = 1e-9;

fn phase_multiple<T: Real>(phase_sum: T) -> Result<i64> {
    let ratio = phase_sum / T::PI();
    let n = ratio.round();
    if (phase_sum - n * T::PI()).abs() > T::tol(PHASE_TOLERANCE) {
        return Err(Error::ConstraintViolated { phase_sum: phase_sum.to_f64_lossy() });
    }
    n.to_i64().ok_or_else(|| Error::ConstraintViolated { phase_sum: phase_sum.to_f64_lossy() })
}

/// Canonicalizes `ecs-general` with `D(−beta1) ⊗ D(−alpha2)`, `ghz-general`
/// with `⊗ D(−beta_i)`, and `balanced-css` with a 50:50 beam splitter followed
/// by displacements (see [`balanced_css_transform`]).
///
/// Fails with `ConstraintViolated` unless the phase sum is a multiple of π.
pub fn local_equivalence_transform<T: Real>(spec: &StateSpec<T>) -> Result<EquivalenceReport<T>> {
    spec.validate()?;
    let p = &spec.params;
    let sign = spec.effective_sign();
    match spec.family {
        StateFamily::EcsGeneral => {
            let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
            let phase_sum = (a1 * b1.conj()).im + (a2 * b2.conj()).im;
            let multiple = phase_multiple(phase_sum)?;
            let protocol = if multiple % 2 == 0 { sign } else { sign.flip() };
            Ok(EquivalenceReport {
                beam_splitter: None,
                displacements: vec![-b1, -a2],
                canonical: StateSpec::ecs(a1 - b1, b2 - a2, protocol),
                phase_sum,
                multiple,
                strict_constraint_met: multiple % 2 == 0,
                protocol,
            })
        }
        StateFamily::GhzGeneral => {
            let m = p.len() / 2;
            let (alphas, betas) = p.split_at(m);
            let phase_sum = alphas.iter().zip(betas).map(|(a, b)| (a * b.conj()).im).sum::<T>();
            let multiple = phase_multiple(phase_sum)?;
            let protocol = if multiple % 2 == 0 { sign } else { sign.flip() };
            Ok(EquivalenceReport {
                beam_splitter: None,
                displacements: betas.iter().map(|&b| -b).collect(),
                canonical: StateSpec::ghz(alphas.iter().zip(betas).map(|(&a, &b)| a - b).collect(), protocol),
                phase_sum,
                multiple,
                strict_constraint_met: multiple % 2 == 0,
                protocol,
            })
        }
        StateFamily::BalancedCss => balanced_css_transform(spec, T::FRAC_PI_4()),
        other => Err(Error::BadSpec(format!("no local-equivalence transform for family {other}"))),
    }
}

/// `|alpha> + |beta>` on one mode: a beam splitter `B(theta)` with a vacuum
/// ancilla gives `|alpha c>|i alpha s> + |beta c>|i beta s>`, which
/// `D(−beta c) ⊗ D(−i alpha s)` maps to `ECS((alpha−beta)c, i(beta−alpha)s)`.
///
/// Only `Im(alpha conj(beta)) = 2nπ` is supported; other phases return
/// `ConstraintViolated`.
pub fn balanced_css_transform<T: Real>(spec: &StateSpec<T>, theta: T) -> Result<EquivalenceReport<T>> {
    spec.validate()?;
    if spec.family != StateFamily::BalancedCss {
        return Err(Error::BadSpec(format!("expected balanced-css, got {}", spec.family)));
    }
    if !(theta > T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::BadRange(format!("beam splitter angle {theta} outside (0, pi/2)")));
    }
    let (a, b) = (spec.params[0], spec.params[1]);
    let i = C::<T>::i();
    let (cs, sn) = (cr(theta.cos()), cr(theta.sin()));
    let general = StateSpec::ecs_general([a * cs, i * a * sn], [b * cs, i * b * sn], spec.effective_sign());
    let mut report = local_equivalence_transform(&general)?;
    if !report.strict_constraint_met {
        return Err(Error::ConstraintViolated { phase_sum: report.phase_sum.to_f64_lossy() });
    }
    report.beam_splitter = Some(theta);
    Ok(report)
}

/// Applies the operations of `report` to a built state.
pub fn apply_equivalence<T: Real>(state: &ModeState<T>, report: &EquivalenceReport<T>) -> Result<ModeState<T>> {
    let mixed = match report.beam_splitter {
        Some(theta) => {
            let extended = tensor(&[state.clone(), ModeState::vacuum(1, *state.truncation())])?;
            beam_splitter_apply(theta, &extended)?
        }
        None => state.clone(),
    };
    displace_modes(&mixed, &report.displacements)
}
