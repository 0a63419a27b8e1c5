//! Command-line driver: argument handling, scenario resolution and report
//! printing on top of the `cvverify` library.

pub mod args;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::str::FromStr;

use cvverify::analysis::NoisyFamily;
use cvverify::fock::{default_dim, fidelity, TruncationConfig};
use cvverify::operators::Sign;
use cvverify::simulate::SaturationPolicy;
use cvverify::states::{apply_equivalence, build_state, local_equivalence_transform, normalization_constant, StateFamily, StateSpec};
use cvverify::Complex64;
use serde::Serialize;

use args::{Cli, Command, SaturationArg, ScenarioArgs, SimulateArgs, SourceArg, StateArgs, TargetArgs, TruncationArgs};
use error::CliError;
use format::{sig6, sig6_list, CsvTable};
use pipeline::{SimulateReport, VerifyReport};
use scenario::{FamilySet, ScenarioConfig, SourceChoice};

/// Text for stdout and warnings for stderr.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Command::State(a) => cmd_state(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Equiv(a) => cmd_equiv(&a),
    }
}

pub fn parse_amplitudes(text: &str) -> Result<Vec<Complex64>, CliError> {
    text.split(',')
        .map(|t| {
            let t = t.trim().replace(' ', "");
            Complex64::from_str(&t).map_err(|_| CliError::Config(format!("cannot parse amplitude '{t}' (examples: 1, -0.5, 0.3+1.2i)")))
        })
        .collect()
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("cannot parse {what} '{t}'"))))
        .collect()
}

fn parse_sign(text: &str) -> Result<Sign, CliError> {
    match text {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        other => Err(CliError::Config(format!("sign must be + or -, got '{other}'"))),
    }
}

/// Builds a spec from `--family`, `--alpha`, `--beta` and `--sign`. Amplitude
/// lists fill the parameters in the order alphas then betas.
pub fn target_spec(t: &TargetArgs) -> Result<StateSpec<f64>, CliError> {
    let family_name = t.family.as_deref().ok_or_else(|| CliError::Config("missing --family".into()))?;
    let family = StateFamily::from_str(family_name).map_err(|e| CliError::Config(e.to_string()))?;
    let mut params = match &t.alpha {
        Some(a) => parse_amplitudes(a)?,
        None => return Err(CliError::Config(format!("family {family} needs --alpha"))),
    };
    if let Some(b) = &t.beta {
        params.extend(parse_amplitudes(b)?);
    }
    let spec = StateSpec::new(family, params)?;
    Ok(match &t.sign {
        Some(s) => spec.with_sign(parse_sign(s)?)?,
        None => spec,
    })
}

fn truncation_for(t: &TruncationArgs, amplitude: f64) -> Result<TruncationConfig<f64>, CliError> {
    Ok(TruncationConfig::new(t.dim.unwrap_or_else(|| default_dim(amplitude)), t.tail_tol.unwrap_or(1e-10))?)
}

fn describe(spec: &StateSpec<f64>) -> String {
    let params: Vec<String> = spec.params.iter().map(|z| complex6(*z)).collect();
    format!("{} [{}]", spec.family, params.join(", "))
}

fn complex6(z: Complex64) -> String {
    match (z.re == 0.0, z.im == 0.0) {
        (_, true) => sig6(z.re),
        (true, false) => format!("{}i", sig6(z.im)),
        _ => format!("{}{}{}i", sig6(z.re), if z.im < 0.0 { "-" } else { "+" }, sig6(z.im.abs())),
    }
}

#[derive(Serialize)]
struct Acceptance {
    mode: usize,
    resolution: usize,
    probability: f64,
}

#[derive(Serialize)]
struct StateReport {
    spec: StateSpec<f64>,
    dim: usize,
    tail_tolerance: f64,
    /// Squared norm of the unnormalized superposition.
    normalization: f64,
    norm: f64,
    tail_mass: f64,
    edge_weight: f64,
    mean_photons: Vec<f64>,
    pnrd_acceptance: Vec<Acceptance>,
}

fn cmd_state(a: &StateArgs) -> Result<Output, CliError> {
    let spec = target_spec(&a.target)?;
    let trunc = truncation_for(&a.truncation, spec.max_amplitude())?;
    let state = build_state(&spec, trunc)?;
    let dim = trunc.dim();
    let resolutions: Vec<usize> = match a.pnrd {
        Some(0) => return Err(CliError::Config("--pnrd needs at least one level".into())),
        Some(r) => vec![r],
        None => [1, 2, 3, 5, 10, 20].into_iter().filter(|&r| r <= dim).collect(),
    };
    let mut pnrd_acceptance = Vec::new();
    for mode in 0..state.num_modes() {
        let dist = state.photon_distribution(mode);
        let total: f64 = dist.iter().sum();
        for &r in &resolutions {
            let p = dist.iter().take(r).sum::<f64>() / total;
            pnrd_acceptance.push(Acceptance { mode, resolution: r, probability: p });
        }
    }
    let report = StateReport {
        normalization: normalization_constant(&spec)?,
        norm: state.norm_sqr().sqrt(),
        tail_mass: state.diagnostics().tail_mass,
        edge_weight: state.edge_weight(),
        mean_photons: (0..state.num_modes()).map(|m| state.mean_photon_number(m)).collect(),
        pnrd_acceptance,
        spec: spec.clone(),
        dim,
        tail_tolerance: trunc.tail_tolerance(),
    };
    if a.json {
        return Ok(Output { stdout: serde_json::to_string_pretty(&report).expect("serializes") + "\n", ..Default::default() });
    }
    let mut s = String::new();
    let _ = writeln!(s, "state          {}", describe(&spec));
    let _ = writeln!(s, "modes          {}", state.num_modes());
    let _ = writeln!(s, "cutoff         {dim} levels per mode, tail tolerance {}", sig6(report.tail_tolerance));
    let _ = writeln!(s, "normalization  {}", sig6(report.normalization));
    let _ = writeln!(s, "norm           {}", sig6(report.norm));
    let _ = writeln!(s, "tail           {}", sig6(report.tail_mass));
    let _ = writeln!(s, "top level      {}", sig6(report.edge_weight));
    let _ = writeln!(s, "mean photons   {}", sig6_list(&report.mean_photons));
    for acc in &report.pnrd_acceptance {
        let _ = writeln!(s, "PNRD mode {} p({}) = {}", acc.mode, acc.resolution, sig6(acc.probability));
    }
    Ok(Output { stdout: s, ..Default::default() })
}

#[derive(Serialize)]
struct EquivReport {
    input: StateSpec<f64>,
    #[serde(flatten)]
    transform: cvverify::states::EquivalenceReport<f64>,
    dim: usize,
    fidelity: f64,
}

fn cmd_equiv(a: &StateArgs) -> Result<Output, CliError> {
    let spec = target_spec(&a.target)?;
    let rep = local_equivalence_transform(&spec)?;
    let amp = spec.max_amplitude().max(rep.canonical.max_amplitude());
    let trunc = truncation_for(&a.truncation, amp)?;
    let moved = apply_equivalence(&build_state(&spec, trunc)?, &rep)?;
    let canonical = build_state(&rep.canonical, trunc)?;
    let report = EquivReport { input: spec.clone(), fidelity: fidelity(&moved, &canonical)?, dim: trunc.dim(), transform: rep };
    if a.json {
        return Ok(Output { stdout: serde_json::to_string_pretty(&report).expect("serializes") + "\n", ..Default::default() });
    }
    let rep = &report.transform;
    let mut s = String::new();
    let _ = writeln!(s, "input          {}", describe(&spec));
    if let Some(theta) = rep.beam_splitter {
        let _ = writeln!(s, "beam splitter  θ = {} with a vacuum ancilla", sig6(theta));
    }
    let shifts: Vec<String> = rep.displacements.iter().map(|z| complex6(*z)).collect();
    let _ = writeln!(s, "displacements  {}", shifts.join(", "));
    let _ = writeln!(s, "phase sum      {} = {}π", sig6(rep.phase_sum), rep.multiple);
    let _ = writeln!(s, "canonical      {}", describe(&rep.canonical));
    let _ = writeln!(s, "protocol       {}", rep.protocol);
    if !rep.strict_constraint_met {
        let _ = writeln!(s, "note           odd multiple of π: the opposite-sign protocol verifies this state");
    }
    let _ = writeln!(s, "fidelity       {} (cutoff {})", sig6(report.fidelity), report.dim);
    Ok(Output { stdout: s, ..Default::default() })
}

fn read_families(arg: &str) -> Result<FamilySet, CliError> {
    let looks_like_file = arg.ends_with(".json") || std::path::Path::new(arg).is_file();
    if !looks_like_file {
        return Ok(FamilySet::Reference { labels: Some(arg.split(',').map(|s| s.trim().to_string()).collect()) });
    }
    let text = fs::read_to_string(arg).map_err(|e| CliError::io(arg, e))?;
    let families: Vec<NoisyFamily<f64>> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{arg}: line {} column {}: {e}", e.line(), e.column())))?;
    Ok(FamilySet::Custom { families })
}

/// Scenario from `--preset`, `--config` or the target flags, then the
/// remaining flags layered on top.
pub fn resolve_scenario(a: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut s = match (&a.preset, &a.config) {
        (Some(_), Some(_)) => return Err(CliError::Config("--preset and --config are mutually exclusive".into())),
        (Some(p), None) => ScenarioConfig::preset(p)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            ScenarioConfig::parse(&text)?
        }
        (None, None) => {
            if a.target.family.is_none() {
                return Err(CliError::Config("give --preset, --config or a target (--family, --alpha, --beta)".into()));
            }
            ScenarioConfig::for_target(target_spec(&a.target)?)
        }
    };
    if a.target.family.is_some() && (a.preset.is_some() || a.config.is_some()) {
        s.target = target_spec(&a.target)?;
    }
    if let Some(d) = a.truncation.dim {
        s.truncation.dim = Some(d);
    }
    if let Some(t) = a.truncation.tail_tol {
        s.truncation.tail_tolerance = t;
    }
    if let Some(r) = a.pnrd {
        s.detectors.pnrd = Some(r);
    }
    if let Some(f) = &a.families {
        s.families = read_families(f)?;
    }
    if let Some(l) = &a.settings {
        s.settings = Some(l.split(',').map(|x| x.trim().to_string()).collect());
    }
    if let Some(m) = &a.mu {
        s.optimization = scenario::OptimizationSettings { optimize: false, mu: Some(parse_floats(m, "weight")?) };
    }
    if let Some(e) = &a.epsilon {
        s.complexity.epsilon = parse_floats(e, "epsilon")?;
    }
    if let Some(d) = a.delta {
        s.complexity.delta = d;
    }
    if let Some(o) = &a.out {
        s.output.dir = Some(o.clone());
    }
    if a.no_timestamp {
        s.output.timestamp = false;
    }
    Ok(s)
}

fn print_config(s: &ScenarioConfig) -> Output {
    Output { stdout: s.to_json() + "\n", ..Default::default() }
}

fn k_table(r: &VerifyReport) -> CsvTable {
    let resp = &r.response;
    let mut t = CsvTable::new(std::iter::once("setting".to_string()).chain(resp.family_labels.iter().cloned()).collect());
    for (label, row) in resp.setting_labels.iter().zip(&resp.k_matrix) {
        t.push(std::iter::once(label.clone()).chain(row.iter().map(|v| v.to_string())).collect());
    }
    t
}

fn write_verify(r: &VerifyReport) -> Result<(), CliError> {
    let Some(dir) = &r.scenario.output.dir else { return Ok(()) };
    let ts = r.scenario.output.timestamp;
    format::ensure_dir(dir)?;
    let resp = &r.response;
    format::write_csv(dir, "k_matrix.csv", &k_table(r).render(), ts)?;

    let mut r2 = CsvTable::new(std::iter::once("setting".to_string()).chain(resp.family_labels.iter().cloned()).collect());
    for (label, row) in resp.setting_labels.iter().zip(&resp.r_squared) {
        r2.push(std::iter::once(label.clone()).chain(row.iter().map(|v| v.to_string())).collect());
    }
    format::write_csv(dir, "r_squared.csv", &r2.render(), ts)?;

    let mut samples = CsvTable::new(vec!["family".into(), "kappa".into(), "epsilon".into(), "setting".into(), "failure".into()]);
    for (f, smp) in resp.family_labels.iter().zip(&resp.samples) {
        for (j, (k, e)) in smp.kappa.iter().zip(&smp.epsilon).enumerate() {
            for (l, label) in resp.setting_labels.iter().enumerate() {
                samples.push(vec![f.clone(), k.to_string(), e.to_string(), label.clone(), smp.failure[l][j].to_string()]);
            }
        }
    }
    format::write_csv(dir, "samples.csv", &samples.render(), ts)?;

    let mut mix = CsvTable::new(vec!["setting".into(), "mu".into()]);
    for (label, m) in resp.setting_labels.iter().zip(&r.mu) {
        mix.push(vec![label.clone(), m.to_string()]);
    }
    format::write_csv(dir, "mixing.csv", &mix.render(), ts)?;

    let rows: Vec<_> = r
        .complexity
        .iter()
        .map(|c| ComplexityCsv { epsilon: c.epsilon, delta: c.delta, nu: c.nu, n_exact: c.value.n_exact, bound: c.value.bound, n_approx: c.value.n_approx })
        .collect();
    let body = if rows.is_empty() { "epsilon,delta,nu,n_exact,bound,n_approx\n".to_string() } else { CsvTable::from_records(&rows)? };
    format::write_csv(dir, "complexity.csv", &body, ts)?;
    format::write_json(dir, "verify.json", r)
}

#[derive(Serialize)]
struct ComplexityCsv {
    epsilon: f64,
    delta: f64,
    nu: f64,
    n_exact: u64,
    bound: f64,
    n_approx: f64,
}

fn render_verify(r: &VerifyReport) -> String {
    let resp = &r.response;
    let mut s = String::new();
    let detector = match r.scenario.detectors.pnrd {
        Some(res) => format!("PNRD({res})"),
        None => "ideal photon counting".into(),
    };
    let _ = writeln!(s, "target         {}", describe(&r.scenario.target));
    let _ = writeln!(s, "cutoff         {} levels per mode; parity measured with {detector}", r.dim);
    let _ = writeln!(s, "noise response k (rows: settings, columns: families)");
    let width = resp.setting_labels.iter().map(|l| l.len()).max().unwrap_or(8).max(8);
    let _ = write!(s, "  {:width$}", "");
    for f in &resp.family_labels {
        let _ = write!(s, " {f:>10}");
    }
    let _ = writeln!(s);
    for (label, row) in resp.setting_labels.iter().zip(&resp.k_matrix) {
        let _ = write!(s, "  {label:width$}");
        for v in row {
            let _ = write!(s, " {:>10}", sig6(*v));
        }
        let _ = writeln!(s);
    }
    let eps: Vec<String> = resp.epsilon_range.iter().map(|[lo, hi]| format!("[{}, {}]", sig6(*lo), sig6(*hi))).collect();
    let _ = writeln!(s, "infidelity     {}", eps.join(" "));
    let _ = writeln!(s, "min r²         {}", sig6(resp.min_r_squared()));
    let weights: Vec<String> = resp.setting_labels.iter().zip(&r.mu).map(|(l, m)| format!("{l} {}", sig6(*m))).collect();
    let _ = writeln!(s, "weights μ      {}{}", weights.join(", "), if r.optimization.is_some() { "" } else { " (fixed)" });
    if r.nu > 0.0 {
        let _ = writeln!(s, "ν              {} (1/ν = {})", sig6(r.nu), sig6(1.0 / r.nu));
    } else {
        let _ = writeln!(s, "ν              0");
    }
    if let Some(opt) = &r.optimization {
        let _ = writeln!(s, "dual value     {} (certificate over families: {})", sig6(opt.dual_value), sig6_list(&opt.certificate));
    }
    let g = &r.spectral_gap;
    let _ = writeln!(
        s,
        "λ₂(Ω)          {} (gap {}, {:?} solver, displacement tail {})",
        sig6(g.lambda2),
        sig6(g.nu),
        g.method,
        sig6(g.truncation_tail)
    );
    if !r.complexity.is_empty() {
        let _ = writeln!(s, "sample complexity");
        let _ = writeln!(s, "  {:>10} {:>10} {:>10} {:>12}", "ε", "δ", "N", "ln(1/δ)/νε");
        for c in &r.complexity {
            let _ = writeln!(s, "  {:>10} {:>10} {:>10} {:>12}", sig6(c.epsilon), sig6(c.delta), c.value.n_exact, sig6(c.value.n_approx));
        }
    }
    s
}

fn cmd_verify(a: &ScenarioArgs) -> Result<Output, CliError> {
    let scenario = resolve_scenario(a)?;
    if a.print_config {
        return Ok(print_config(&scenario));
    }
    let prepared = pipeline::prepare(&scenario)?;
    let report = pipeline::verify(&scenario, &prepared)?;
    write_verify(&report)?;
    let stdout = if a.json { serde_json::to_string_pretty(&report).expect("serializes") + "\n" } else { render_verify(&report) };
    Ok(Output { stdout, warnings: report.warnings.clone() })
}

fn write_simulate(r: &SimulateReport) -> Result<(), CliError> {
    let Some(dir) = &r.scenario.output.dir else { return Ok(()) };
    let ts = r.scenario.output.timestamp;
    format::ensure_dir(dir)?;
    format::write_csv(dir, "runs.csv", &CsvTable::from_records(&r.rows)?, ts)?;
    format::write_csv(dir, "sources.csv", &CsvTable::from_records(&r.sources)?, ts)?;
    format::write_json(dir, "simulate.json", r)
}

fn render_simulate(r: &SimulateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "target         {}", describe(&r.scenario.target));
    let _ = writeln!(
        s,
        "rounds         N = {} per run (ν = {}, ε = {}, δ = {}), {} runs",
        r.rounds,
        sig6(r.nu),
        sig6(r.epsilon),
        sig6(r.delta),
        r.runs
    );
    let _ = writeln!(s, "bound          (1 − νε)^N = {}", sig6(r.bound));
    let _ = writeln!(s, "  {:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}", "source", "κ", "ε", "p(pass)", "p^N", "accepted", "σ");
    for x in &r.sources {
        let kappa = x.kappa.map(sig6).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "  {:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}",
            x.label,
            kappa,
            sig6(x.epsilon),
            sig6(x.pass_probability),
            sig6(x.predicted_acceptance),
            sig6(x.acceptance),
            sig6(x.std_error)
        );
    }
    if let Some(w) = r.sources.iter().find(|x| x.label == r.worst) {
        let limit = r.delta + 3.0 * w.std_error.max((r.delta * (1.0 - r.delta) / r.runs as f64).sqrt());
        let verdict = if w.acceptance <= limit { "within" } else { "above" };
        let _ = writeln!(s, "worst source   {} accepted {} ± {}, {verdict} δ + 3σ = {}", w.label, sig6(w.acceptance), sig6(w.std_error), sig6(limit));
    }
    s
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Output, CliError> {
    let mut scenario = resolve_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.simulation.seed = seed;
    }
    if let Some(runs) = a.runs {
        scenario.simulation.runs = runs;
    }
    if let Some(rounds) = a.rounds {
        scenario.simulation.rounds = Some(rounds);
    }
    if let Some(src) = a.source {
        scenario.simulation.source = match src {
            SourceArg::Target => SourceChoice::Target,
            SourceArg::Families => SourceChoice::Families,
        };
    }
    if let Some(sat) = a.saturation {
        scenario.simulation.saturation_policy = match sat {
            SaturationArg::DiscardResample => SaturationPolicy::DiscardResample,
            SaturationArg::CountAsFail => SaturationPolicy::CountAsFail,
        };
    }
    if a.scenario.print_config {
        return Ok(print_config(&scenario));
    }
    // surface range errors before the expensive fit
    if let Some(&e) = scenario.complexity.epsilon.first() {
        pipeline::check_probability("epsilon", "--epsilon", e)?;
    }
    pipeline::check_probability("delta", "--delta", scenario.complexity.delta)?;
    let prepared = pipeline::prepare(&scenario)?;
    let report = pipeline::simulate(&scenario, &prepared)?;
    write_simulate(&report)?;
    let stdout = if a.scenario.json { serde_json::to_string_pretty(&report).expect("serializes") + "\n" } else { render_simulate(&report) };
    Ok(Output { stdout, warnings: report.warnings.clone() })
}
