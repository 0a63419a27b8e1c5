//! Scenario documents: everything a `verify` or `simulate` invocation needs,
//! as one JSON object.

use std::path::PathBuf;

use cvverify::analysis::{KappaCalibration, NoisyFamily};
use cvverify::operators::Sign;
use cvverify::simulate::SaturationPolicy;
use cvverify::states::StateSpec;
use cvverify::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub target: StateSpec<f64>,
    #[serde(default)]
    pub truncation: TruncationSettings,
    #[serde(default)]
    pub detectors: DetectorSettings,
    #[serde(default)]
    pub families: FamilySet,
    #[serde(default)]
    pub calibration: KappaCalibration,
    /// Labels of the settings to keep; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<Vec<String>>,
    #[serde(default)]
    pub optimization: OptimizationSettings,
    #[serde(default)]
    pub complexity: ComplexitySettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSettings {
    /// Levels per mode; chosen from the largest amplitude when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_tail")]
    pub tail_tolerance: f64,
}

fn default_tail() -> f64 {
    1e-8
}

impl Default for TruncationSettings {
    fn default() -> Self {
        Self { dim: None, tail_tolerance: default_tail() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    /// Resolution of the number-resolving detectors used for parity
    /// settings; ideal detectors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnrd: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySet {
    /// The four symmetric perturbations of `ECS+(α, α)`, optionally
    /// restricted to some labels.
    Reference {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Custom { families: Vec<NoisyFamily<f64>> },
}

impl Default for FamilySet {
    fn default() -> Self {
        FamilySet::Reference { labels: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSettings {
    /// Solve for the mixing weights; otherwise use `mu` or uniform weights.
    #[serde(default = "yes")]
    pub optimize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

impl Default for OptimizationSettings {
    fn default() -> Self {
        Self { optimize: true, mu: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySettings {
    #[serde(default = "default_epsilons")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.01]
}

fn default_delta() -> f64 {
    0.01
}

impl Default for ComplexitySettings {
    fn default() -> Self {
        Self { epsilon: default_epsilons(), delta: default_delta() }
    }
}

/// Which state the simulated source emits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    Target,
    /// Every noise family at the first complexity infidelity.
    #[default]
    Families,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    /// Rounds per run; the exact sample complexity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u64>,
    #[serde(default)]
    pub saturation_policy: SaturationPolicy,
    #[serde(default)]
    pub source: SourceChoice,
}

fn default_runs() -> u64 {
    1000
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { seed: 0, runs: default_runs(), rounds: None, saturation_policy: SaturationPolicy::default(), source: SourceChoice::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// First line of every CSV file records the generation time.
    #[serde(default = "yes")]
    pub timestamp: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: None, timestamp: true }
    }
}

impl ScenarioConfig {
    pub fn for_target(target: StateSpec<f64>) -> Self {
        Self {
            target,
            truncation: TruncationSettings::default(),
            detectors: DetectorSettings::default(),
            families: FamilySet::default(),
            calibration: KappaCalibration::default(),
            settings: None,
            optimization: OptimizationSettings::default(),
            complexity: ComplexitySettings::default(),
            simulation: SimulationSettings::default(),
            output: OutputSettings::default(),
        }
    }

    /// `ECS+(1, 1)` at cutoff 25, parity measured with PNRD(5), the four
    /// reference families, optimized weights, `ε = δ = 0.01`.
    pub fn appendix_e() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let mut s = Self::for_target(StateSpec::ecs(one, one, Sign::Plus));
        s.truncation.dim = Some(25);
        s.detectors.pnrd = Some(5);
        s.simulation.runs = 10_000;
        s
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "appendix-e" => Ok(Self::appendix_e()),
            other => Err(CliError::Config(format!("unknown preset '{other}' (available: appendix-e)"))),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}
