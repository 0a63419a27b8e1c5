use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cvverify", version, about = "Verify entangled coherent states with displacements and photon counting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a state and print its truncation diagnostics.
    State(StateArgs),
    /// Fit noise responses, optimize the setting weights and tabulate sample complexity.
    Verify(ScenarioArgs),
    /// Run the verification rounds by Monte Carlo.
    Simulate(SimulateArgs),
    /// Map a general state to its canonical form by local operations.
    Equiv(StateArgs),
}

/// A target given on the command line.
#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// coherent, cat-even, cat-odd, balanced-css, ecs+, ecs-, ecs-general, ghz+, ghz-, ghz-general
    #[arg(long)]
    pub family: Option<String>,
    /// Amplitudes, comma separated (`1`, `0.5+0.3i`, `-1.2i`).
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// Relative sign of the general families: `+` or `-`.
    #[arg(long, allow_hyphen_values = true)]
    pub sign: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TruncationArgs {
    /// Fock levels per mode.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Largest coherent-state tail mass allowed above the cutoff.
    #[arg(long)]
    pub tail_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Report the acceptance of a number-resolving detector with this many levels.
    #[arg(long)]
    pub pnrd: Option<usize>,
    /// Machine-readable output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario; `appendix-e` reproduces the reference ECS+(1, 1) analysis.
    #[arg(long)]
    pub preset: Option<String>,
    /// Scenario document (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Levels resolved by the parity detectors.
    #[arg(long)]
    pub pnrd: Option<usize>,
    /// JSON list of noise families, or comma-separated reference labels.
    #[arg(long)]
    pub families: Option<String>,
    /// Comma-separated labels of the settings to use.
    #[arg(long)]
    pub settings: Option<String>,
    /// Fixed weights instead of the optimized ones.
    #[arg(long)]
    pub mu: Option<String>,
    /// Target infidelities, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Directory for CSV and JSON outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp line from CSV files.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Print the resolved scenario document and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Target,
    Families,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SaturationArg {
    DiscardResample,
    CountAsFail,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs per source.
    #[arg(long)]
    pub runs: Option<u64>,
    /// Rounds per run; defaults to the exact sample complexity.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    #[arg(long, value_enum)]
    pub saturation: Option<SaturationArg>,
}
