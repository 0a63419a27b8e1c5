//! Parametric noise families `κ -> |φ(κ)>` built from coherent states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ModeState, TruncationConfig};
use crate::scalar::{Real, C};
use crate::states::CoherentSuperposition;

/// One product term `coeff ⊗_k |base_k + κ slope_k>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateTerm<T> {
    pub coeff: C<T>,
    pub base: Vec<C<T>>,
    pub slope: Vec<C<T>>,
}

/// Coherent superposition whose amplitudes move linearly with `κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentTemplate<T> {
    pub terms: Vec<TemplateTerm<T>>,
}

impl<T: Real> CoherentTemplate<T> {
    pub fn num_modes(&self) -> usize {
        self.terms.first().map_or(0, |t| t.base.len())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_modes();
        if m == 0 || self.terms.iter().any(|t| t.base.len() != m || t.slope.len() != m) {
            return Err(Error::BadSpec("template terms need matching, nonzero base and slope lengths".into()));
        }
        Ok(())
    }

    pub fn at(&self, kappa: T) -> Result<CoherentSuperposition<T>> {
        self.validate()?;
        let k = C::new(kappa, T::zero());
        CoherentSuperposition::new(
            self.terms
                .iter()
                .map(|t| (t.coeff, t.base.iter().zip(&t.slope).map(|(b, s)| b + s * k).collect()))
                .collect(),
        )
    }

    /// Largest amplitude reached for `|κ| <= kappa_max`.
    pub fn max_amplitude(&self, kappa_max: T) -> T {
        self.terms
            .iter()
            .flat_map(|t| t.base.iter().zip(&t.slope))
            .map(|(b, s)| b.norm() + s.norm() * kappa_max.abs())
            .fold(T::zero(), T::max)
    }
}

/// A labelled noise family and the perturbations at which it is probed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyFamily<T> {
    pub label: String,
    pub template: CoherentTemplate<T>,
    #[serde(default)]
    pub kappa_grid: Vec<T>,
}

impl<T: Real> NoisyFamily<T> {
    pub fn state(&self, kappa: T, trunc: TruncationConfig<T>) -> Result<ModeState<T>> {
        self.template.at(kappa)?.to_state(trunc)
    }

    /// Infidelity against `target` evaluated with exact coherent overlaps.
    pub fn exact_infidelity(&self, kappa: T, target: &CoherentSuperposition<T>) -> Result<T> {
        let phi = self.template.at(kappa)?;
        if phi.num_modes() != target.num_modes() {
            return Err(Error::ShapeMismatch(format!(
                "family '{}' has {} modes, target has {}",
                self.label,
                phi.num_modes(),
                target.num_modes()
            )));
        }
        let f = phi.inner_exact(target).norm_sqr() / (phi.norm_sqr_exact() * target.norm_sqr_exact());
        Ok((T::one() - f).max(T::zero()))
    }
}

fn symmetric_pair<T: Real>(a: (C<T>, C<T>), b: (C<T>, C<T>)) -> CoherentTemplate<T> {
    // |a1 + κ a2>|b1 + κ b2> + |b1 + κ b2>|a1 + κ a2>
    let one = C::new(T::one(), T::zero());
    CoherentTemplate {
        terms: vec![
            TemplateTerm { coeff: one, base: vec![a.0, b.0], slope: vec![a.1, b.1] },
            TemplateTerm { coeff: one, base: vec![b.0, a.0], slope: vec![b.1, a.1] },
        ],
    }
}

/// The four symmetric perturbations of `ECS+(alpha, alpha)`:
/// `|α+κ>|κ> + |κ>|α+κ>`, `|α+κ>|−κ> + |−κ>|α+κ>`, `|α>|κ> + |κ>|α>` and
/// `|α+κ>|0> + |0>|α+κ>`, each reducing to the target at `κ = 0`.
pub fn reference_families<T: Real>(alpha: T) -> Vec<NoisyFamily<T>> {
    let a = C::new(alpha, T::zero());
    let zero = C::new(T::zero(), T::zero());
    let one = C::new(T::one(), T::zero());
    let templates = [
        symmetric_pair((a, one), (zero, one)),
        symmetric_pair((a, one), (zero, -one)),
        symmetric_pair((a, zero), (zero, one)),
        symmetric_pair((a, one), (zero, zero)),
    ];
    templates
        .into_iter()
        .enumerate()
        .map(|(i, template)| NoisyFamily { label: format!("phi{}", i + 1), template, kappa_grid: Vec::new() })
        .collect()
}

/// How a `κ` grid is placed: log-spaced points whose largest infidelity is
/// `eps_max`, spanning `decades` orders of magnitude in `κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaCalibration {
    pub eps_max: f64,
    pub points: usize,
    pub decades: f64,
}

impl Default for KappaCalibration {
    fn default() -> Self {
        Self { eps_max: 0.01, points: 30, decades: 2.0 }
    }
}

/// Smallest positive `κ` at which the family reaches infidelity `epsilon`
/// against `target`, by doubling from `1e-3` and then bisecting on the exact
/// infidelity.
pub fn kappa_for_infidelity<T: Real>(family: &NoisyFamily<T>, target: &CoherentSuperposition<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::BadRange(format!("target infidelity {epsilon} outside (0, 1)")));
    }
    let eps = |k: T| family.exact_infidelity(k, target);
    let mut hi = T::lit(1e-3);
    let mut steps = 0;
    while eps(hi)? < epsilon {
        hi = hi * T::lit(2.0);
        steps += 1;
        if steps > 40 {
            return Err(Error::DegenerateFit {
                family: family.label.clone(),
                reason: format!("infidelity never reaches {epsilon} as κ grows"),
            });
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if eps(mid)? < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= hi * T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    Ok(hi)
}

/// Solves `ε(κ) = eps_max` and lays out the log-spaced grid below it.
pub fn calibrate_kappa_grid<T: Real>(
    family: &NoisyFamily<T>,
    target: &CoherentSuperposition<T>,
    cal: KappaCalibration,
) -> Result<Vec<T>> {
    if !(cal.eps_max > 0.0 && cal.eps_max < 1.0) || cal.points < 2 || !(cal.decades > 0.0) {
        return Err(Error::BadRange(format!("invalid κ calibration {cal:?}")));
    }
    let top = kappa_for_infidelity(family, target, T::lit(cal.eps_max))?.log10();
    let bottom = top - T::lit(cal.decades);
    let n = cal.points - 1;
    Ok((0..cal.points)
        .map(|i| {
            let f = T::from_usize_lossy(i) / T::from_usize_lossy(n);
            T::lit(10.0).powf(bottom + (top - bottom) * f)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;
    use crate::operators::Sign;
    use crate::states::{build_state, StateSpec};

    fn tr(d: usize) -> TruncationConfig<f64> {
        TruncationConfig::new(d, 1e-10).unwrap()
    }

    #[test]
    fn families_start_at_target() {
        let t = tr(25);
        let target = build_state(&StateSpec::ecs(C::new(1.0, 0.0), C::new(1.0, 0.0), Sign::Plus), t).unwrap();
        for f in reference_families(1.0f64) {
            let s = f.state(0.0, t).unwrap();
            assert!((fidelity(&s, &target).unwrap() - 1.0).abs() < 1e-9, "{}", f.label);
        }
    }

    #[test]
    fn exact_infidelity_matches_truncated() {
        let t = tr(30);
        let spec = StateSpec::ecs(C::new(1.0, 0.0), C::new(1.0, 0.0), Sign::Plus);
        let target = build_state(&spec, t).unwrap();
        let sup = spec.superposition().unwrap();
        for f in reference_families(1.0f64) {
            for k in [1e-3, 0.05, 0.2] {
                let exact = f.exact_infidelity(k, &sup).unwrap();
                let numeric = 1.0 - fidelity(&f.state(k, t).unwrap(), &target).unwrap();
                assert!((exact - numeric).abs() < 1e-10, "{} κ={k}", f.label);
            }
        }
    }

    #[test]
    fn phi4_infidelity_increases_with_kappa() {
        let sup = StateSpec::ecs(C::new(1.0, 0.0), C::new(1.0, 0.0), Sign::Plus).superposition().unwrap();
        let phi4 = &reference_families(1.0f64)[3];
        let mut last = 0.0;
        for i in 1..40 {
            let k = 0.005 * i as f64;
            let e = phi4.exact_infidelity(k, &sup).unwrap();
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn calibrated_grid_hits_ceiling() {
        let sup = StateSpec::ecs(C::new(1.0, 0.0), C::new(1.0, 0.0), Sign::Plus).superposition().unwrap();
        for f in reference_families(1.0f64) {
            let grid = calibrate_kappa_grid(&f, &sup, KappaCalibration::default()).unwrap();
            assert_eq!(grid.len(), 30);
            assert!((grid[29] / grid[0] - 100.0).abs() < 1e-6);
            let e = f.exact_infidelity(grid[29], &sup).unwrap();
            assert!((e - 0.01).abs() < 1e-9, "{} {e}", f.label);
            assert!(grid.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn invisible_noise_is_rejected() {
        let sup = StateSpec::ecs(C::new(1.0, 0.0), C::new(1.0, 0.0), Sign::Plus).superposition().unwrap();
        let one = C::new(1.0, 0.0);
        let zero = C::new(0.0, 0.0);
        // κ only rescales a global coefficient, so the state never changes
        let fam = NoisyFamily {
            label: "static".into(),
            template: CoherentTemplate {
                terms: vec![
                    TemplateTerm { coeff: one, base: vec![one, zero], slope: vec![zero, zero] },
                    TemplateTerm { coeff: one, base: vec![zero, one], slope: vec![zero, zero] },
                ],
            },
            kappa_grid: vec![],
        };
        assert!(matches!(
            calibrate_kappa_grid(&fam, &sup, KappaCalibration::default()),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn template_json_roundtrip() {
        let f = reference_families(1.0f64).remove(1);
        let text = serde_json::to_string(&f).unwrap();
        let back: NoisyFamily<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
