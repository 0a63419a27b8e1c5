//! Round-by-round Monte Carlo of the verification procedure: draw a setting
//! from `μ`, displace, sample detector outcomes from the Born rule, apply the
//! pass rule.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::NoisyFamily;
use crate::error::{Error, Result};
use crate::fock::{digits, ModeState, TruncationConfig};
use crate::linalg::CMatrix;
use crate::operators::{apply_product, displacement_matrix, DetectorKind, DetectorModel};
use crate::protocols::{MeasurementSetting, PassRule, VerificationStrategy};
use crate::scalar::Real;
use crate::states::{build_state, StateSpec};

/// What happens to rounds in which a number-resolving detector saturates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationPolicy {
    /// Drop the round and redraw it, setting choice included.
    #[default]
    DiscardResample,
    /// Treat the round as failed.
    CountAsFail,
}

/// The state handed to the verifier in every round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de> + Default"))]
pub enum Source<T> {
    Target { spec: StateSpec<T> },
    Noisy { family: NoisyFamily<T>, kappa: T },
}

impl<T: Real> Source<T> {
    pub fn label(&self) -> String {
        match self {
            Source::Target { .. } => "target".into(),
            Source::Noisy { family, .. } => family.label.clone(),
        }
    }

    pub fn prepare(&self, trunc: TruncationConfig<T>) -> Result<ModeState<T>> {
        match self {
            Source::Target { spec } => build_state(spec, trunc),
            Source::Noisy { family, kappa } => family.state(*kappa, trunc),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig<T> {
    pub strategy: VerificationStrategy<T>,
    pub source: Source<T>,
    /// Must use the strategy's cutoff.
    pub truncation: TruncationConfig<T>,
    pub rounds: u64,
    pub seed: u64,
    /// Overrides the resolution of every number-resolving detector.
    pub pnrd_resolution: Option<usize>,
    pub saturation_policy: SaturationPolicy,
}

impl<T: Real> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::BadRange("a run needs at least one round".into()));
        }
        if self.truncation.dim() != self.strategy.dim() {
            return Err(Error::MixedTruncation);
        }
        if self.pnrd_resolution == Some(0) {
            return Err(Error::BadRange("PNRD resolution must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub rounds: u64,
    pub passes: u64,
    pub fails: u64,
    /// Saturated rounds that were redrawn; not part of `rounds`.
    pub discarded: u64,
    /// Every round passed.
    pub accepted: bool,
    pub empirical_pass_rate: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    Pass,
    Fail,
    Saturated,
}

/// Outcome sampler for one setting on one fixed state. Photon numbers of the
/// measured modes are drawn one mode at a time, each from its distribution
/// conditioned on the modes already drawn.
#[derive(Clone, Debug)]
pub struct SettingSampler {
    detectors: Vec<DetectorModel>,
    rule: PassRule,
    dim: usize,
    /// `levels[j][n_0 … n_j]`: joint probability of the first `j + 1`
    /// measured modes, mode 0 slowest.
    levels: Vec<Vec<f64>>,
    pass: f64,
    saturated: f64,
}

fn with_resolution(d: DetectorModel, resolution: Option<usize>) -> DetectorModel {
    match (d.kind, resolution) {
        (DetectorKind::Pnrd, Some(r)) => DetectorModel { resolution: r, ..d },
        _ => d,
    }
}

impl SettingSampler {
    pub fn new<T: Real>(setting: &MeasurementSetting<T>, state: &ModeState<T>, resolution: Option<usize>) -> Result<Self> {
        let recipe = &setting.recipe;
        let m = state.num_modes();
        let dim = state.dim();
        if recipe.detectors.len() != m || setting.effect.dim() != dim {
            return Err(Error::ShapeMismatch(format!("setting '{}' does not match the state", setting.label)));
        }
        let modes = recipe.measured_modes();
        let ops: Vec<Option<CMatrix<T>>> = recipe
            .detectors
            .iter()
            .zip(&recipe.displacements)
            .map(|(d, &a)| d.map(|_| displacement_matrix(a, dim)))
            .collect();
        let refs: Vec<Option<&CMatrix<T>>> = ops.iter().map(|o| o.as_ref()).collect();
        let moved = apply_product(state, &refs)?;

        let k = modes.len();
        let mut joint = vec![0.0f64; dim.pow(k as u32)];
        for (i, a) in moved.amplitudes().iter().enumerate() {
            let levels = digits(i, m, dim);
            let idx = modes.iter().fold(0, |acc, &md| acc * dim + levels[md]);
            joint[idx] += a.norm_sqr().to_f64_lossy();
        }
        let total: f64 = joint.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numeric("state has no weight inside the cutoff".into()));
        }
        joint.iter_mut().for_each(|p| *p /= total);

        let detectors: Vec<DetectorModel> = recipe.measured_detectors().into_iter().map(|d| with_resolution(d, resolution)).collect();
        let (mut pass, mut saturated) = (0.0, 0.0);
        for (i, &p) in joint.iter().enumerate() {
            match classify(&detectors, recipe.rule, &digits(i, k, dim)) {
                RoundOutcome::Pass => pass += p,
                RoundOutcome::Saturated => saturated += p,
                RoundOutcome::Fail => {}
            }
        }

        let mut levels = vec![joint];
        while levels.len() < k {
            let coarser = levels.last().expect("nonempty").chunks(dim).map(|c| c.iter().sum()).collect();
            levels.push(coarser);
        }
        levels.reverse();
        Ok(Self { detectors, rule: recipe.rule, dim, levels, pass, saturated })
    }

    /// Exact probability of a passing, non-saturated round.
    pub fn pass_probability(&self) -> f64 {
        self.pass
    }

    pub fn saturation_probability(&self) -> f64 {
        self.saturated
    }

    pub fn detectors(&self) -> &[DetectorModel] {
        &self.detectors
    }

    /// Photon numbers of the measured modes.
    pub fn sample_photons<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.levels.len());
        let mut idx = 0;
        for table in &self.levels {
            let row = &table[idx * self.dim..(idx + 1) * self.dim];
            let mass: f64 = row.iter().sum();
            let mut u = rng.random::<f64>() * mass;
            // rounding can leave u just above the last weight
            let mut pick = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            for (n, &p) in row.iter().enumerate() {
                if u < p {
                    pick = n;
                    break;
                }
                u -= p;
            }
            out.push(pick);
            idx = idx * self.dim + pick;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RoundOutcome {
        classify(&self.detectors, self.rule, &self.sample_photons(rng))
    }
}

fn classify(detectors: &[DetectorModel], rule: PassRule, photons: &[usize]) -> RoundOutcome {
    let outcomes: Vec<usize> = photons.iter().zip(detectors).map(|(&n, d)| d.outcome_for(n)).collect();
    if outcomes.iter().zip(detectors).any(|(&o, d)| d.is_saturated(o)) {
        RoundOutcome::Saturated
    } else if rule.passes(detectors, &outcomes) {
        RoundOutcome::Pass
    } else {
        RoundOutcome::Fail
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    passes: u64,
    fails: u64,
    discarded: u64,
}

/// Samplers for every setting of a strategy on one state.
#[derive(Clone, Debug)]
pub struct StrategySampler {
    settings: Vec<SettingSampler>,
    cumulative: Vec<f64>,
    policy: SaturationPolicy,
}

impl StrategySampler {
    pub fn new<T: Real>(
        strategy: &VerificationStrategy<T>,
        state: &ModeState<T>,
        resolution: Option<usize>,
        policy: SaturationPolicy,
    ) -> Result<Self> {
        let settings = strategy
            .settings()
            .iter()
            .map(|s| SettingSampler::new(s, state, resolution))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let cumulative: Vec<f64> = strategy
            .mu()
            .iter()
            .map(|m| {
                acc += m.to_f64_lossy();
                acc
            })
            .collect();
        let usable: f64 = settings.iter().zip(strategy.mu()).map(|(s, m)| m.to_f64_lossy() * (1.0 - s.saturated)).sum();
        if policy == SaturationPolicy::DiscardResample && usable <= 1e-12 {
            return Err(Error::BadRange("every round saturates the detectors; nothing left to resample".into()));
        }
        Ok(Self { settings, cumulative, policy })
    }

    pub fn settings(&self) -> &[SettingSampler] {
        &self.settings
    }

    /// Probability that one counted round passes.
    pub fn pass_probability(&self) -> f64 {
        let mut prev = 0.0;
        let (mut pass, mut kept) = (0.0, 0.0);
        for (s, &c) in self.settings.iter().zip(&self.cumulative) {
            let w = c - prev;
            prev = c;
            pass += w * s.pass;
            kept += w * (1.0 - s.saturated);
        }
        match self.policy {
            SaturationPolicy::DiscardResample => pass / kept,
            SaturationPolicy::CountAsFail => pass,
        }
    }

    fn pick_setting<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }

    /// One counted round; returns whether it passed and how many saturated
    /// draws were discarded on the way.
    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, u64) {
        let mut discarded = 0;
        loop {
            let l = self.pick_setting(rng);
            match self.settings[l].sample(rng) {
                RoundOutcome::Pass => return (true, discarded),
                RoundOutcome::Fail => return (false, discarded),
                RoundOutcome::Saturated => match self.policy {
                    SaturationPolicy::CountAsFail => return (false, discarded),
                    SaturationPolicy::DiscardResample => discarded += 1,
                },
            }
        }
    }

    fn rounds<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Counts {
        let mut c = Counts::default();
        for _ in 0..n {
            let (ok, d) = self.round(rng);
            c.discarded += d;
            if ok {
                c.passes += 1;
            } else {
                c.fails += 1;
            }
        }
        c
    }

    /// Index (1-based) of the first failing round, if any within `limit`.
    fn first_failure<R: Rng + ?Sized>(&self, limit: u64, rng: &mut R) -> Option<u64> {
        (1..=limit).find(|_| !self.round(rng).0)
    }
}

fn report(seed: u64, rounds: u64, c: Counts, started: Instant) -> RunReport {
    RunReport {
        seed,
        rounds,
        passes: c.passes,
        fails: c.fails,
        discarded: c.discarded,
        accepted: c.fails == 0,
        empirical_pass_rate: c.passes as f64 / rounds as f64,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

fn prepare<T: Real>(config: &RunConfig<T>) -> Result<StrategySampler> {
    config.validate()?;
    let state = config.source.prepare(config.truncation)?;
    if state.num_modes() != config.strategy.num_modes() {
        return Err(Error::BadArity(format!(
            "source has {} modes, strategy {}",
            state.num_modes(),
            config.strategy.num_modes()
        )));
    }
    StrategySampler::new(&config.strategy, &state, config.pnrd_resolution, config.saturation_policy)
}

/// Runs `config.rounds` rounds from a generator seeded with `config.seed`.
pub fn run<T: Real>(config: &RunConfig<T>) -> Result<RunReport> {
    let started = Instant::now();
    let sampler = prepare(config)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let counts = sampler.rounds(config.rounds, &mut rng);
    Ok(report(config.seed, config.rounds, counts, started))
}

/// Independent runs, one per seed, in parallel. Reports come back in seed order.
pub fn run_batch<T: Real>(config: &RunConfig<T>, seeds: &[u64]) -> Result<Vec<RunReport>> {
    let sampler = prepare(config)?;
    Ok(seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            report(seed, config.rounds, sampler.rounds(config.rounds, &mut rng), started)
        })
        .collect())
}

/// One CSV row of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seed: u64,
    pub rounds: u64,
    pub family: String,
    pub epsilon: f64,
    pub passes: u64,
    pub fails: u64,
    pub discarded: u64,
    pub accepted: bool,
}

pub fn batch_rows(reports: &[RunReport], family: &str, epsilon: f64) -> Vec<BatchRow> {
    reports
        .iter()
        .map(|r| BatchRow {
            seed: r.seed,
            rounds: r.rounds,
            family: family.to_string(),
            epsilon,
            passes: r.passes,
            fails: r.fails,
            discarded: r.discarded,
            accepted: r.accepted,
        })
        .collect()
}

/// Fraction of accepting runs and its binomial standard error.
pub fn acceptance_rate(reports: &[RunReport]) -> (f64, f64) {
    binomial(reports.iter().filter(|r| r.accepted).count() as u64, reports.len() as u64)
}

fn binomial(hits: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rounds: u64,
    pub acceptance: f64,
    pub std_error: f64,
}

/// Probability that `N` successive rounds all pass, for every `N` in
/// `n_grid`, estimated from `repetitions` independent runs. `config.rounds`
/// is ignored. Repetition `r` uses stream `r` of the generator seeded with
/// `config.seed`.
pub fn acceptance_curve<T: Real>(config: &RunConfig<T>, n_grid: &[u64], repetitions: u64) -> Result<Vec<CurvePoint>> {
    if repetitions == 0 {
        return Err(Error::BadRange("need at least one repetition".into()));
    }
    let sampler = prepare(&RunConfig { rounds: 1, ..config.clone() })?;
    let limit = n_grid.iter().copied().max().unwrap_or(0);
    let first: Vec<Option<u64>> = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            rng.set_stream(r);
            sampler.first_failure(limit, &mut rng)
        })
        .collect();
    Ok(n_grid
        .iter()
        .map(|&n| {
            let survived = first.iter().filter(|f| f.is_none_or(|k| k > n)).count() as u64;
            let (acceptance, std_error) = binomial(survived, repetitions);
            CurvePoint { rounds: n, acceptance, std_error }
        })
        .collect())
}
