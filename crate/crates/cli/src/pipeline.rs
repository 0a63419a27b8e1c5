//! Scenario execution shared by `verify` and `simulate`.

use cvverify::analysis::{
    calibrate_kappa_grid, fit_noise_response, kappa_for_infidelity, optimize_mu, reference_families, sample_complexity,
    spectral_gap, NoiseResponse, NoisyFamily, OptimizationResult, SampleComplexity, SpectralGap,
};
use cvverify::fock::{default_dim, ModeState, TruncationConfig};
use cvverify::operators::DetectorModel;
use cvverify::protocols::{settings_for, strategy, MeasurementSetting, VerificationStrategy};
use cvverify::simulate::{acceptance_rate, batch_rows, run_batch, BatchRow, RunConfig, Source};
use cvverify::states::{build_state, CoherentSuperposition, StateFamily, StateSpec};
use cvverify::Error;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{FamilySet, ScenarioConfig, SourceChoice};

pub const UNDETECTABLE: &str = "protocol cannot detect this noise";

pub struct Prepared {
    pub truncation: TruncationConfig<f64>,
    pub target: ModeState<f64>,
    pub superposition: CoherentSuperposition<f64>,
    pub settings: Vec<MeasurementSetting<f64>>,
    pub families: Vec<NoisyFamily<f64>>,
}

fn reference_amplitude(target: &StateSpec<f64>) -> Result<f64, CliError> {
    let p = &target.params;
    let symmetric = target.family == StateFamily::EcsPlus && p[0] == p[1] && p[0].im == 0.0 && p[0].re > 0.0;
    if !symmetric {
        return Err(CliError::Config(
            "the reference noise families perturb ECS+(α, α) with real α > 0; give custom families for other targets".into(),
        ));
    }
    Ok(p[0].re)
}

fn select_families(set: &FamilySet, target: &StateSpec<f64>) -> Result<Vec<NoisyFamily<f64>>, CliError> {
    match set {
        FamilySet::Reference { labels } => {
            let all = reference_families(reference_amplitude(target)?);
            let Some(labels) = labels else { return Ok(all) };
            labels
                .iter()
                .map(|l| {
                    all.iter().find(|f| &f.label == l).cloned().ok_or_else(|| {
                        CliError::Config(format!("unknown reference family '{l}' (available: phi1, phi2, phi3, phi4)"))
                    })
                })
                .collect()
        }
        FamilySet::Custom { families } => {
            if families.is_empty() {
                return Err(CliError::Config("custom family list is empty".into()));
            }
            for f in families {
                f.template.validate()?;
                if f.template.num_modes() != target.num_modes() {
                    return Err(CliError::Config(format!(
                        "family '{}' has {} modes, target has {}",
                        f.label,
                        f.template.num_modes(),
                        target.num_modes()
                    )));
                }
            }
            Ok(families.clone())
        }
    }
}

pub fn prepare(s: &ScenarioConfig) -> Result<Prepared, CliError> {
    s.target.validate()?;
    let superposition = s.target.superposition()?;
    let mut families = select_families(&s.families, &s.target)?;
    for f in &mut families {
        if f.kappa_grid.is_empty() {
            f.kappa_grid = calibrate_kappa_grid(f, &superposition, s.calibration)?;
        }
    }
    let dim = match s.truncation.dim {
        Some(d) => d,
        None => {
            let kmax = families.iter().flat_map(|f| f.kappa_grid.iter()).fold(0.0f64, |a, k| a.max(k.abs()));
            let amp = families.iter().map(|f| f.template.max_amplitude(kmax)).fold(s.target.max_amplitude(), f64::max);
            default_dim(amp)
        }
    };
    let truncation = TruncationConfig::new(dim, s.truncation.tail_tolerance)?;
    let target = build_state(&s.target, truncation)?;
    let parity = match s.detectors.pnrd {
        Some(r) => DetectorModel::pnrd(r)?,
        None => DetectorModel::pnrd(dim)?,
    };
    let all = settings_for(&s.target, truncation, parity).map_err(|e| match e {
        Error::BadSpec(_) => CliError::hint(e, "run `cvverify equiv` to map a general state to its canonical form"),
        other => other.into(),
    })?;
    let settings = match &s.settings {
        None => all,
        Some(labels) => {
            let available: Vec<String> = all.iter().map(|x| x.label.clone()).collect();
            let picked: Vec<_> = all.into_iter().filter(|x| labels.contains(&x.label)).collect();
            if picked.len() != labels.len() {
                return Err(CliError::Config(format!("unknown setting in {labels:?} (available: {})", available.join(", "))));
            }
            picked
        }
    };
    Ok(Prepared { truncation, target, superposition, settings, families })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexityRow {
    pub epsilon: f64,
    pub delta: f64,
    pub nu: f64,
    #[serde(flatten)]
    pub value: SampleComplexity,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub scenario: ScenarioConfig,
    pub dim: usize,
    pub response: NoiseResponse<f64>,
    /// Present when the weights were optimized.
    pub optimization: Option<OptimizationResult<f64>>,
    pub mu: Vec<f64>,
    /// Smallest `Σ_l μ_l k_{l,i}` over families.
    pub nu: f64,
    pub spectral_gap: SpectralGap<f64>,
    pub complexity: Vec<ComplexityRow>,
    pub warnings: Vec<String>,
}

fn column_minimum(k: &[Vec<f64>], mu: &[f64]) -> f64 {
    let families = k.first().map_or(0, |r| r.len());
    (0..families).map(|i| k.iter().zip(mu).map(|(row, m)| m * row[i].max(0.0)).sum::<f64>()).fold(f64::INFINITY, f64::min)
}

pub fn check_probability(name: &str, flag: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(CliError::hint(
            Error::BadRange(format!("{name} = {x} must lie strictly between 0 and 1")),
            format!("pass a value such as `{flag} 0.01`"),
        ))
    }
}

pub fn verify(s: &ScenarioConfig, p: &Prepared) -> Result<VerifyReport, CliError> {
    for &e in &s.complexity.epsilon {
        check_probability("epsilon", "--epsilon", e)?;
    }
    check_probability("delta", "--delta", s.complexity.delta)?;
    let response = fit_noise_response(&p.settings, &p.target, &p.families, p.truncation)?;
    let (optimization, mu) = if s.optimization.optimize {
        let opt = optimize_mu(&response.k_matrix)?;
        let mu = opt.mu.clone();
        (Some(opt), mu)
    } else {
        let n = p.settings.len();
        (None, s.optimization.mu.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]))
    };
    let mixed: VerificationStrategy<f64> = strategy(p.settings.clone(), mu.clone())?;
    let gap = spectral_gap(&mixed)?;
    let nu = column_minimum(&response.k_matrix, &mu);
    let mut warnings = Vec::new();
    let mut complexity = Vec::new();
    if nu <= 0.0 {
        let blind: Vec<&str> = (0..response.num_families())
            .filter(|&i| response.k_matrix.iter().all(|row| row[i] <= 0.0))
            .map(|i| response.family_labels[i].as_str())
            .collect();
        warnings.push(format!("{UNDETECTABLE} (ν = 0; no setting responds to: {})", blind.join(", ")));
    } else {
        for &epsilon in &s.complexity.epsilon {
            let value = sample_complexity(nu.min(1.0), epsilon, s.complexity.delta)?;
            complexity.push(ComplexityRow { epsilon, delta: s.complexity.delta, nu, value });
        }
    }
    if gap.truncation_tail > s.truncation.tail_tolerance {
        warnings.push(format!(
            "displacement tails reach {:.2e} at cutoff {}; the spectral gap is a truncated estimate",
            gap.truncation_tail,
            p.truncation.dim()
        ));
    }
    Ok(VerifyReport {
        scenario: s.clone(),
        dim: p.truncation.dim(),
        response,
        optimization,
        mu,
        nu,
        spectral_gap: gap,
        complexity,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SourceSummary {
    pub label: String,
    pub kappa: Option<f64>,
    /// Infidelity of the emitted state with the target.
    pub epsilon: f64,
    /// Exact single-round pass probability under the strategy.
    pub pass_probability: f64,
    /// `pass_probability^N`.
    pub predicted_acceptance: f64,
    pub acceptance: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub scenario: ScenarioConfig,
    pub mu: Vec<f64>,
    pub nu: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: u64,
    pub runs: u64,
    /// `(1 − νε)^N`.
    pub bound: f64,
    pub sources: Vec<SourceSummary>,
    /// Source with the highest empirical acceptance.
    pub worst: String,
    #[serde(skip)]
    pub rows: Vec<BatchRow>,
    pub warnings: Vec<String>,
}

pub fn simulate(s: &ScenarioConfig, p: &Prepared) -> Result<SimulateReport, CliError> {
    let epsilon = *s.complexity.epsilon.first().ok_or_else(|| CliError::Config("no infidelity given".into()))?;
    let delta = s.complexity.delta;
    check_probability("epsilon", "--epsilon", epsilon)?;
    check_probability("delta", "--delta", delta)?;
    if s.simulation.runs == 0 {
        return Err(CliError::hint(Error::BadRange("runs = 0".into()), "pass `--runs 1000` or more"));
    }
    let verified = verify(&ScenarioConfig { complexity: crate::scenario::ComplexitySettings { epsilon: vec![epsilon], delta }, ..s.clone() }, p)?;
    let rounds = match s.simulation.rounds {
        Some(0) => return Err(CliError::hint(Error::BadRange("rounds = 0".into()), "omit --rounds to use the sample complexity")),
        Some(n) => n,
        None => match verified.complexity.first() {
            Some(c) => c.value.n_exact,
            None => {
                return Err(CliError::hint(
                    Error::BadRange(format!("{UNDETECTABLE}: no finite number of rounds rejects it")),
                    "pass --rounds explicitly to simulate anyway",
                ))
            }
        },
    };
    let mixed = strategy(p.settings.clone(), verified.mu.clone())?;
    let sources: Vec<(Source<f64>, Option<f64>)> = match s.simulation.source {
        SourceChoice::Target => vec![(Source::Target { spec: s.target.clone() }, None)],
        SourceChoice::Families => p
            .families
            .iter()
            .map(|f| {
                let kappa = kappa_for_infidelity(f, &p.superposition, epsilon)?;
                Ok((Source::Noisy { family: f.clone(), kappa }, Some(kappa)))
            })
            .collect::<Result<Vec<_>, Error>>()?,
    };
    let seeds: Vec<u64> = (0..s.simulation.runs).map(|i| s.simulation.seed.wrapping_add(i)).collect();
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (source, kappa) in sources {
        let state = source.prepare(p.truncation)?;
        let eps = cvverify::analysis::infidelity(&state, &p.target)?;
        let pass = mixed.pass_probability(&state)?;
        let cfg = RunConfig {
            strategy: mixed.clone(),
            source: source.clone(),
            truncation: p.truncation,
            rounds,
            seed: s.simulation.seed,
            pnrd_resolution: s.detectors.pnrd,
            saturation_policy: s.simulation.saturation_policy,
        };
        let reports = run_batch(&cfg, &seeds)?;
        let (acceptance, std_error) = acceptance_rate(&reports);
        let label = source.label();
        rows.extend(batch_rows(&reports, &label, eps));
        summaries.push(SourceSummary {
            label,
            kappa,
            epsilon: eps,
            pass_probability: pass,
            predicted_acceptance: pass.powf(rounds as f64),
            acceptance,
            std_error,
        });
    }
    let worst = summaries
        .iter()
        .fold(None::<&SourceSummary>, |w, x| match w {
            Some(w) if w.acceptance >= x.acceptance => Some(w),
            _ => Some(x),
        })
        .map(|x| x.label.clone())
        .unwrap_or_default();
    Ok(SimulateReport {
        scenario: s.clone(),
        mu: verified.mu,
        nu: verified.nu,
        epsilon,
        delta,
        rounds,
        runs: s.simulation.runs,
        bound: (1.0 - verified.nu * epsilon).max(0.0).powf(rounds as f64),
        sources: summaries,
        worst,
        rows,
        warnings: verified.warnings,
    })
}
