//! Measurement settings built from displacements and photon detectors, and
//! their randomized mixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{digits, ModeState, TruncationConfig};
use crate::linalg::CMatrix;
use crate::operators::{displacement_unitary, DetectorModel, ModeOperator, OperatorKind, Sign};
use crate::scalar::{c, Real, C};
use crate::states::{StateFamily, StateSpec};

/// Pass predicate over the outcomes of the measured modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassRule {
    /// Fails only when every measured detector registers photons.
    NotAllClicked,
    /// Passes when the total photon count is even.
    EvenParity,
    /// Passes when the total photon count is odd.
    OddParity,
}

impl PassRule {
    pub fn parity(sign: Sign) -> Self {
        match sign {
            Sign::Plus => PassRule::EvenParity,
            Sign::Minus => PassRule::OddParity,
        }
    }

    /// Evaluates the rule on non-saturated outcomes.
    pub fn passes(&self, detectors: &[DetectorModel], outcomes: &[usize]) -> bool {
        match self {
            PassRule::NotAllClicked => !detectors.iter().zip(outcomes).all(|(d, &o)| d.clicked(o)),
            PassRule::EvenParity => outcomes.iter().sum::<usize>() % 2 == 0,
            PassRule::OddParity => outcomes.iter().sum::<usize>() % 2 == 1,
        }
    }
}

/// Physical description of a setting: displace every mode, measure some of
/// them, apply the pass rule to the detector outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingRecipe<T> {
    /// One amplitude per mode; zero means no displacement.
    pub displacements: Vec<C<T>>,
    /// Detector on each mode, `None` for unmeasured modes.
    pub detectors: Vec<Option<DetectorModel>>,
    pub rule: PassRule,
}

impl<T: Real> SettingRecipe<T> {
    pub fn measured_modes(&self) -> Vec<usize> {
        self.detectors.iter().enumerate().filter_map(|(i, d)| d.map(|_| i)).collect()
    }

    pub fn measured_detectors(&self) -> Vec<DetectorModel> {
        self.detectors.iter().flatten().copied().collect()
    }

    /// Same recipe with every number-resolving detector replaced by one that
    /// resolves all `dim` levels.
    pub fn with_full_resolution(&self, dim: usize) -> Self {
        let detectors = self
            .detectors
            .iter()
            .map(|d| d.map(|m| if m.kind == crate::operators::DetectorKind::Pnrd { DetectorModel { resolution: dim, ..m } } else { m }))
            .collect();
        Self { detectors, ..self.clone() }
    }

    /// Pass indicator over the Fock basis of the measured modes, summing the
    /// detector effects of every non-saturated passing outcome.
    pub fn pass_diagonal(&self, dim: usize) -> Vec<T> {
        let dets = self.measured_detectors();
        let k = dets.len();
        (0..dim.pow(k as u32))
            .map(|i| {
                let outcomes: Vec<usize> = digits(i, k, dim).iter().zip(&dets).map(|(&n, d)| d.outcome_for(n)).collect();
                let saturated = outcomes.iter().zip(&dets).any(|(&o, d)| d.is_saturated(o));
                if !saturated && self.rule.passes(&dets, &outcomes) {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// Effect generated from the recipe alone: `D† (Σ passing effects) D`.
    pub fn effect(&self, trunc: TruncationConfig<T>) -> Result<ModeOperator<T>> {
        let modes = self.measured_modes();
        if modes.is_empty() {
            return Err(Error::ShapeMismatch("recipe measures no mode".into()));
        }
        let local = modes
            .iter()
            .map(|&m| Ok(displacement_unitary(self.displacements[m], trunc)?.local_matrix()))
            .collect::<Result<Vec<_>>>()?;
        ModeOperator::conjugated(self.displacements.len(), trunc.dim(), modes, local, self.pass_diagonal(trunc.dim()), OperatorKind::Projector)
    }
}

/// One binary test `Ω_l`: its pass projector and how it is measured.
#[derive(Clone, Debug)]
pub struct MeasurementSetting<T> {
    pub label: String,
    pub effect: ModeOperator<T>,
    pub recipe: SettingRecipe<T>,
}

impl<T: Real> MeasurementSetting<T> {
    fn from_recipe(label: String, recipe: SettingRecipe<T>, trunc: TruncationConfig<T>) -> Result<Self> {
        // The stored effect uses ideal detectors; finite resolution only
        // matters when sampling outcomes.
        let effect = recipe.with_full_resolution(trunc.dim()).effect(trunc)?;
        Ok(Self { label, effect, recipe })
    }

    pub fn num_modes(&self) -> usize {
        self.effect.num_modes()
    }

    /// `<ψ|Ω_l|ψ>`.
    pub fn pass_probability(&self, state: &ModeState<T>) -> Result<T> {
        Ok(self.effect.expectation(state)?.re)
    }

    /// Largest deviation between the stored effect and the one regenerated
    /// from the recipe (with ideal detectors). Compared densely on small
    /// footprints and through seeded random probes otherwise.
    pub fn recipe_deviation(&self) -> Result<T> {
        let dim = self.effect.dim();
        let trunc = TruncationConfig::new(dim, T::lit(0.5))?;
        let regenerated = self.recipe.with_full_resolution(dim).effect(trunc)?;
        let local_size = dim.pow(self.effect.footprint().len() as u32);
        if local_size <= 256 && regenerated.footprint() == self.effect.footprint() {
            return Ok(self.effect.local_matrix().max_abs_diff(&regenerated.local_matrix()));
        }
        let n = self.effect.space_size();
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
        let mut worst = T::zero();
        for _ in 0..4 {
            let v: Vec<C<T>> =
                (0..n).map(|_| c(T::lit(rng.random::<f64>() - 0.5), T::lit(rng.random::<f64>() - 0.5))).collect();
            let scale = v.iter().map(|z| z.norm()).fold(T::zero(), T::max);
            let a = self.effect.apply(&v);
            let b = regenerated.apply(&v);
            let d = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(T::zero(), T::max);
            worst = worst.max(d / scale);
        }
        Ok(worst)
    }
}

fn pair_recipe<T: Real>(num_modes: usize, pair: (usize, usize), shift: (usize, C<T>)) -> SettingRecipe<T> {
    let mut displacements = vec![C::new(T::zero(), T::zero()); num_modes];
    displacements[shift.0] = shift.1;
    let mut detectors = vec![None; num_modes];
    detectors[pair.0] = Some(DetectorModel::spd());
    detectors[pair.1] = Some(DetectorModel::spd());
    SettingRecipe { displacements, detectors, rule: PassRule::NotAllClicked }
}

/// The three settings for `ECS±(alpha, beta)`: click coincidence with no
/// displacement, with `D(−alpha) ⊗ D(−beta)`, and the joint parity after
/// `D(−alpha/2) ⊗ D(−beta/2)` measured with ideal number-resolving detectors.
pub fn ecs_settings<T: Real>(alpha: C<T>, beta: C<T>, sign: Sign, trunc: TruncationConfig<T>) -> Result<Vec<MeasurementSetting<T>>> {
    ecs_settings_with(alpha, beta, sign, trunc, DetectorModel { kind: crate::operators::DetectorKind::Pnrd, resolution: trunc.dim() })
}

/// As [`ecs_settings`], with the parity setting measured by `parity_detector`.
pub fn ecs_settings_with<T: Real>(
    alpha: C<T>,
    beta: C<T>,
    sign: Sign,
    trunc: TruncationConfig<T>,
    parity_detector: DetectorModel,
) -> Result<Vec<MeasurementSetting<T>>> {
    let zero = C::new(T::zero(), T::zero());
    let half = C::new(T::lit(0.5), T::zero());
    let spd = Some(DetectorModel::spd());
    let recipes = [
        ("coincidence".to_string(), SettingRecipe { displacements: vec![zero, zero], detectors: vec![spd, spd], rule: PassRule::NotAllClicked }),
        ("displaced-coincidence".to_string(), SettingRecipe { displacements: vec![-alpha, -beta], detectors: vec![spd, spd], rule: PassRule::NotAllClicked }),
        (
            format!("displaced-parity{sign}"),
            SettingRecipe {
                displacements: vec![-alpha * half, -beta * half],
                detectors: vec![Some(parity_detector); 2],
                rule: PassRule::parity(sign),
            },
        ),
    ];
    recipes.into_iter().map(|(label, r)| MeasurementSetting::from_recipe(label, r, trunc)).collect()
}

/// The `2m − 1` settings for `GHZ±(alpha_1..alpha_m)`: for each adjacent pair
/// `(l, l+1)` a click-coincidence test after `D(−alpha_l)` on mode `l`, and one
/// after `D(−alpha_{l+1})` on mode `l+1`; then the global parity after
/// `⊗ D(−alpha_i/2)`.
pub fn ghz_settings<T: Real>(alphas: &[C<T>], sign: Sign, trunc: TruncationConfig<T>) -> Result<Vec<MeasurementSetting<T>>> {
    ghz_settings_with(alphas, sign, trunc, DetectorModel { kind: crate::operators::DetectorKind::Pnrd, resolution: trunc.dim() })
}

pub fn ghz_settings_with<T: Real>(
    alphas: &[C<T>],
    sign: Sign,
    trunc: TruncationConfig<T>,
    parity_detector: DetectorModel,
) -> Result<Vec<MeasurementSetting<T>>> {
    let m = alphas.len();
    if m < 2 {
        return Err(Error::BadArity(format!("GHZ settings need at least 2 modes, got {m}")));
    }
    let mut out = Vec::with_capacity(2 * m - 1);
    for l in 0..m - 1 {
        out.push(MeasurementSetting::from_recipe(
            format!("pair{l}-{}-left", l + 1),
            pair_recipe(m, (l, l + 1), (l, -alphas[l])),
            trunc,
        )?);
        out.push(MeasurementSetting::from_recipe(
            format!("pair{l}-{}-right", l + 1),
            pair_recipe(m, (l, l + 1), (l + 1, -alphas[l + 1])),
            trunc,
        )?);
    }
    let half = C::new(T::lit(0.5), T::zero());
    let parity = SettingRecipe {
        displacements: alphas.iter().map(|&a| -a * half).collect(),
        detectors: vec![Some(parity_detector); m],
        rule: PassRule::parity(sign),
    };
    let setting = MeasurementSetting::from_recipe(format!("displaced-parity{sign}"), parity, trunc)?;
    debug_assert!(setting.effect.footprint().len() == m);
    out.push(setting);
    Ok(out)
}

/// Settings for a canonical target family (`ecs±`, `ghz±`).
pub fn settings_for<T: Real>(spec: &StateSpec<T>, trunc: TruncationConfig<T>, parity_detector: DetectorModel) -> Result<Vec<MeasurementSetting<T>>> {
    spec.validate()?;
    let sign = spec.effective_sign();
    match spec.family {
        StateFamily::EcsPlus | StateFamily::EcsMinus => ecs_settings_with(spec.params[0], spec.params[1], sign, trunc, parity_detector),
        StateFamily::GhzPlus | StateFamily::GhzMinus => ghz_settings_with(&spec.params, sign, trunc, parity_detector),
        other => Err(Error::BadSpec(format!(
            "no verification settings for family {other}; canonicalize general states first"
        ))),
    }
}

/// Randomized test `Ω = Σ_l mu_l Ω_l`.
#[derive(Clone, Debug)]
pub struct VerificationStrategy<T> {
    settings: Vec<MeasurementSetting<T>>,
    mu: Vec<T>,
}

/// Validates `mu` as a probability vector over `len` settings.
pub fn check_distribution<T: Real>(mu: &[T], len: usize) -> Result<()> {
    if mu.len() != len {
        return Err(Error::BadDistribution(format!("{} weights for {len} settings", mu.len())));
    }
    if let Some(bad) = mu.iter().find(|&&w| !w.is_finite() || w < T::zero()) {
        return Err(Error::BadDistribution(format!("weight {bad} is not a nonnegative number")));
    }
    let total: T = mu.iter().copied().sum();
    if (total - T::one()).abs() > T::tol(1e-12) {
        return Err(Error::BadDistribution(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Builds a strategy after checking that `mu` is a probability vector.
pub fn strategy<T: Real>(settings: Vec<MeasurementSetting<T>>, mu: Vec<T>) -> Result<VerificationStrategy<T>> {
    if settings.is_empty() {
        return Err(Error::BadDistribution("a strategy needs at least one setting".into()));
    }
    check_distribution(&mu, settings.len())?;
    let first = &settings[0].effect;
    if settings.iter().any(|s| s.effect.num_modes() != first.num_modes() || s.effect.dim() != first.dim()) {
        return Err(Error::ShapeMismatch("settings act on different systems".into()));
    }
    Ok(VerificationStrategy { settings, mu })
}

impl<T: Real> VerificationStrategy<T> {
    pub fn uniform(settings: Vec<MeasurementSetting<T>>) -> Result<Self> {
        let n = settings.len().max(1);
        let w = T::one() / T::from_usize_lossy(n);
        strategy(settings, vec![w; n])
    }

    pub fn settings(&self) -> &[MeasurementSetting<T>] {
        &self.settings
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn num_modes(&self) -> usize {
        self.settings[0].num_modes()
    }

    pub fn dim(&self) -> usize {
        self.settings[0].effect.dim()
    }

    pub fn with_mu(&self, mu: Vec<T>) -> Result<Self> {
        strategy(self.settings.clone(), mu)
    }

    /// The mixed operator `Ω`.
    pub fn mixed_operator(&self) -> ModeOperator<T> {
        let terms = self.settings.iter().zip(&self.mu).map(|(s, &w)| (w, s.effect.clone())).collect();
        ModeOperator::mixture(terms, OperatorKind::Hermitian).expect("settings share one system")
    }

    /// `tr(Ω |ψ><ψ|)`.
    pub fn pass_probability(&self, state: &ModeState<T>) -> Result<T> {
        let mut acc = T::zero();
        for (s, &w) in self.settings.iter().zip(&self.mu) {
            acc += w * s.pass_probability(state)?;
        }
        Ok(acc)
    }

    /// Per-setting pass probabilities of `target`, failing if any falls
    /// below `1 − 1e-7`.
    pub fn check_fixes(&self, target: &ModeState<T>) -> Result<Vec<T>> {
        let probs = self.settings.iter().map(|s| s.pass_probability(target)).collect::<Result<Vec<_>>>()?;
        if let Some((s, p)) = self.settings.iter().zip(&probs).find(|(_, &p)| p < T::one() - T::tol(1e-7)) {
            return Err(Error::OperatorCheck(format!("setting '{}' passes the target with probability {p}", s.label)));
        }
        Ok(probs)
    }
}

/// Serializable description of a strategy for a canonical target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyDocument {
    pub target: StateSpec<f64>,
    pub mu: Vec<f64>,
    pub parity_detector: DetectorModel,
    pub truncation: TruncationConfig<f64>,
    pub labels: Vec<String>,
}

impl StrategyDocument {
    pub fn build(&self) -> Result<VerificationStrategy<f64>> {
        let settings = settings_for(&self.target, self.truncation, self.parity_detector)?;
        strategy(settings, self.mu.clone())
    }

    pub fn describe(target: StateSpec<f64>, strategy: &VerificationStrategy<f64>, truncation: TruncationConfig<f64>) -> Self {
        let parity_detector = strategy
            .settings()
            .last()
            .and_then(|s| s.recipe.measured_detectors().first().copied())
            .unwrap_or_else(DetectorModel::spd);
        Self {
            target,
            mu: strategy.mu().to_vec(),
            parity_detector,
            truncation,
            labels: strategy.settings().iter().map(|s| s.label.clone()).collect(),
        }
    }
}

/// Dense local matrix of a setting. Small systems only.
pub fn setting_matrix<T: Real>(setting: &MeasurementSetting<T>) -> CMatrix<T> {
    setting.effect.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{tensor, ModeState};
    use crate::operators::parity_patterns;
    use crate::states::build_state;
    use num_complex::Complex64;

    fn tr(d: usize) -> TruncationConfig<f64> {
        TruncationConfig::new(d, 1e-10).unwrap()
    }

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn ecs_settings_fix_target() {
        let t = tr(25);
        for (a, b) in [(r(1.0), r(1.0)), (r(1.5), r(0.8)), (r(1.0), Complex64::new(0.0, 1.0))] {
            for sign in [Sign::Plus, Sign::Minus] {
                let settings = ecs_settings(a, b, sign, t).unwrap();
                assert_eq!(settings.len(), 3);
                let psi = build_state(&StateSpec::ecs(a, b, sign), t).unwrap();
                for s in &settings {
                    let p = s.pass_probability(&psi).unwrap();
                    assert!((p - 1.0).abs() < 1e-7, "{} {p}", s.label);
                    s.effect.check().unwrap();
                    assert!(s.recipe_deviation().unwrap() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn ecs_dense_effects_are_projectors() {
        let t = tr(14);
        for s in ecs_settings(r(1.0), r(1.0), Sign::Plus, t).unwrap() {
            let m = setting_matrix(&s);
            assert!(m.hermiticity_defect() < 1e-10);
            assert!(m.matmul(&m).max_abs_diff(&m) < 1e-8);
        }
    }

    #[test]
    fn coincidence_kills_double_occupation() {
        let t = tr(16);
        let s = &ecs_settings(r(1.0), r(1.0), Sign::Plus, t).unwrap()[0];
        let one = ModeState::fock(1, t).unwrap();
        let both = tensor(&[one.clone(), one]).unwrap();
        let out = s.effect.apply_state(&both).unwrap();
        assert!(out.norm_sqr() < 1e-20);
    }

    #[test]
    fn joint_vacuum_has_weight_on_target() {
        let t = tr(25);
        let psi = build_state(&StateSpec::ecs(r(1.0), r(1.0), Sign::Plus), t).unwrap();
        let p00 = psi.amplitude(&[0, 0]).norm_sqr();
        // |<00|ψ>|² = 4 e^{-1} / C
        let expect = 4.0 * (-1.0f64).exp() / (2.0 * (1.0 + (-1.0f64).exp()));
        assert!(p00 > 0.0);
        assert!((p00 - expect).abs() < 1e-10);
    }

    #[test]
    fn sign_duality() {
        let t = tr(25);
        let plus = build_state(&StateSpec::ecs(r(1.0), r(1.0), Sign::Plus), t).unwrap();
        let minus = build_state(&StateSpec::ecs(r(1.0), r(1.0), Sign::Minus), t).unwrap();
        let s_minus = &ecs_settings(r(1.0), r(1.0), Sign::Minus, t).unwrap()[2];
        let s_plus = &ecs_settings(r(1.0), r(1.0), Sign::Plus, t).unwrap()[2];
        assert!(s_minus.pass_probability(&plus).unwrap() < 1.0 - 1e-3);
        assert!(s_plus.pass_probability(&minus).unwrap() < 1.0 - 1e-3);
        assert!((s_minus.pass_probability(&minus).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn ghz_settings_fix_target() {
        for m in [2usize, 3] {
            let t = tr(if m == 2 { 20 } else { 14 });
            let alphas = vec![r(1.0); m];
            for sign in [Sign::Plus, Sign::Minus] {
                let settings = ghz_settings(&alphas, sign, t).unwrap();
                assert_eq!(settings.len(), 2 * m - 1);
                let psi = build_state(&StateSpec::ghz(alphas.clone(), sign), t).unwrap();
                for s in &settings {
                    let p = s.pass_probability(&psi).unwrap();
                    assert!((p - 1.0).abs() < 1e-7, "m={m} {} {p}", s.label);
                    assert!(s.recipe_deviation().unwrap() < 1e-8, "{}", s.label);
                }
            }
        }
    }

    #[test]
    fn ghz_rejects_single_mode() {
        assert!(matches!(ghz_settings(&[r(1.0)], Sign::Plus, tr(10)), Err(Error::BadArity(_))));
    }

    #[test]
    fn three_mode_parity_has_four_patterns() {
        assert_eq!(parity_patterns(3, Sign::Plus).len(), 4);
    }

    #[test]
    fn finite_resolution_drops_saturated_levels() {
        let recipe = SettingRecipe::<f64> {
            displacements: vec![r(0.0)],
            detectors: vec![Some(DetectorModel::pnrd(3).unwrap())],
            rule: PassRule::EvenParity,
        };
        assert_eq!(recipe.pass_diagonal(6), vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(recipe.with_full_resolution(6).pass_diagonal(6), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn strategy_validation() {
        let t = tr(16);
        let s = ecs_settings(r(1.0), r(1.0), Sign::Plus, t).unwrap();
        assert!(VerificationStrategy::uniform(s.clone()).is_ok());
        assert!(strategy(s.clone(), vec![0.463, 0.477, 0.060]).is_ok());
        assert!(matches!(strategy(s.clone(), vec![-0.1, 0.6, 0.5]), Err(Error::BadDistribution(_))));
        assert!(matches!(strategy(s.clone(), vec![0.5, 0.5]), Err(Error::BadDistribution(_))));
        assert!(matches!(strategy(s, vec![0.5, 0.5, 0.1]), Err(Error::BadDistribution(_))));
    }

    #[test]
    fn mixed_operator_expectation() {
        let t = tr(20);
        let st = VerificationStrategy::uniform(ecs_settings(r(1.0), r(1.0), Sign::Plus, t).unwrap()).unwrap();
        let psi = build_state(&StateSpec::ecs(r(1.0), r(1.0), Sign::Plus), t).unwrap();
        let omega = st.mixed_operator();
        assert!((omega.expectation(&psi).unwrap().re - 1.0).abs() < 1e-7);
        let vac = ModeState::vacuum(2, t);
        let direct = st.pass_probability(&vac).unwrap();
        assert!((omega.expectation(&vac).unwrap().re - direct).abs() < 1e-12);
        st.check_fixes(&psi).unwrap();
        assert!(st.check_fixes(&vac).is_err());
    }

    #[test]
    fn document_roundtrip() {
        let t = tr(16);
        let target = StateSpec::ecs(r(1.0), r(0.5), Sign::Minus);
        let st = strategy(settings_for(&target, t, DetectorModel::pnrd(5).unwrap()).unwrap(), vec![0.4, 0.4, 0.2]).unwrap();
        let doc = StrategyDocument::describe(target, &st, t);
        let text = serde_json::to_string(&doc).unwrap();
        let back: StrategyDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        let rebuilt = back.build().unwrap();
        assert_eq!(rebuilt.mu(), st.mu());
        assert_eq!(rebuilt.settings()[2].recipe, st.settings()[2].recipe);
    }
}
