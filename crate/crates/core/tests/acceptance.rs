//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cvverify::analysis::{
    calibrate_kappa_grid, fit_noise_response, kappa_for_infidelity, optimize_mu, pass_probability_exact, reference_families,
    sample_complexity, spectral_gap, KappaCalibration, NoiseResponse,
};
use cvverify::fock::{fidelity, ModeState, TruncationConfig};
use cvverify::operators::{pnrd_acceptance, DetectorModel, Sign};
use cvverify::protocols::{ecs_settings, ecs_settings_with, settings_for, strategy, MeasurementSetting, VerificationStrategy};
use cvverify::simulate::{acceptance_curve, RoundOutcome, RunConfig, SaturationPolicy, SettingSampler, Source};
use cvverify::states::{apply_equivalence, build_state, local_equivalence_transform, CoherentSuperposition, StateSpec};
use cvverify::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

/// Response matrix of `ECS+(α, α)` against the four reference families,
/// rows: coincidence, displaced coincidence, displaced parity.
const REFERENCE_K: [[f64; 4]; 3] = [[0.389, 0.429, 0.798, 0.0], [0.341, 0.429, 0.0, 0.778], [0.996, 0.0, 0.554, 0.524]];
const REFERENCE_MU: [f64; 3] = [0.463, 0.477, 0.060];
/// Amplitude that reproduces the reference matrix (recovered by the sweep in criterion 2).
const RECOVERED_ALPHA: f64 = 1.0;

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn tr(dim: usize, tol: f64) -> TruncationConfig<f64> {
    TruncationConfig::new(dim, tol).expect("valid truncation")
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s(e: cvverify::Error) -> String {
    e.to_string()
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    check(took <= limit, format!("took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
}

fn lp_regression() -> Outcome {
    let k: Vec<Vec<f64>> = REFERENCE_K.iter().map(|r| r.to_vec()).collect();
    let res = optimize_mu(&k).map_err(e2s)?;
    let inv = 1.0 / res.nu_opt;
    check((2.474..=2.494).contains(&inv), format!("1/ν = {inv:.4}"))?;
    for (m, e) in res.mu.iter().zip(REFERENCE_MU) {
        check((m - e).abs() <= 0.005, format!("μ = {:?}", res.mu))?;
    }
    Ok(format!("1/ν = {inv:.4}, μ = ({:.4}, {:.4}, {:.4})", res.mu[0], res.mu[1], res.mu[2]))
}

fn fitted_response(alpha: f64, t: TruncationConfig<f64>) -> Result<(Vec<MeasurementSetting<f64>>, NoiseResponse<f64>), String> {
    let a = cx(alpha, 0.0);
    let spec = StateSpec::ecs(a, a, Sign::Plus);
    let target = build_state(&spec, t).map_err(e2s)?;
    let sup = spec.superposition().map_err(e2s)?;
    let mut families = reference_families(alpha);
    for f in &mut families {
        f.kappa_grid = calibrate_kappa_grid(f, &sup, KappaCalibration::default()).map_err(e2s)?;
    }
    let settings = ecs_settings_with(a, a, Sign::Plus, t, DetectorModel::pnrd(5).map_err(e2s)?).map_err(e2s)?;
    let resp = fit_noise_response(&settings, &target, &families, t).map_err(e2s)?;
    Ok((settings, resp))
}

fn max_deviation(k: &[Vec<f64>]) -> f64 {
    k.iter().zip(REFERENCE_K.iter()).flat_map(|(r, e)| r.iter().zip(e).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max)
}

fn end_to_end_fit() -> Outcome {
    let t = tr(25, 1e-8);
    let mut sweep = Vec::new();
    for alpha in [0.5, 0.75, 1.0, 1.25, 1.5, 2.0] {
        // the larger amplitudes need a wider cutoff than the pinned run
        let wide = tr(40, 1e-8);
        let dev = fitted_response(alpha, wide).map(|(_, r)| max_deviation(&r.k_matrix)).unwrap_or(f64::INFINITY);
        sweep.push((alpha, dev));
    }
    let best = sweep.iter().copied().fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    check(best.0 == RECOVERED_ALPHA, format!("sweep prefers α = {} ({sweep:?})", best.0))?;

    let started = Instant::now();
    let (_, resp) = fitted_response(RECOVERED_ALPHA, t)?;
    let took = started.elapsed();
    let dev = max_deviation(&resp.k_matrix);
    check(dev <= 0.02, format!("max |Δk| = {dev:.4}, k = {:?}", resp.k_matrix))?;
    let r2 = resp.min_r_squared();
    check(r2 > 0.999, format!("min r² = {r2}"))?;
    let top = resp.epsilon_range.iter().map(|r| r[1]).fold(0.0, f64::max);
    check(top <= 0.02, format!("ε reaches {top}"))?;
    within(Duration::from_secs(60), took)?;
    Ok(format!(
        "α = {RECOVERED_ALPHA} (sweep: {}), max |Δk| = {dev:.4}, min r² = {r2:.6}, fit {:.2}s",
        sweep.iter().map(|(a, d)| format!("{a}:{d:.3}")).collect::<Vec<_>>().join(" "),
        took.as_secs_f64()
    ))
}

fn pnrd_remark() -> Outcome {
    let t = tr(60, 1e-12);
    let cat = build_state(&StateSpec::cat(cx(1.0, 0.0), Sign::Plus), t).map_err(e2s)?;
    let p3 = pnrd_acceptance(&cat, 3).map_err(e2s)?;
    let loss20 = 1.0 - pnrd_acceptance(&cat, 20).map_err(e2s)?;
    check((p3 - 0.972).abs() <= 0.001, format!("p(3) = {p3}"))?;
    check(loss20 <= 1e-15, format!("1 − p(20) = {loss20:e}"))?;
    Ok(format!("p(3) = {p3:.5}, 1 − p(20) = {loss20:.2e}"))
}

fn theorem_cases() -> Vec<(String, StateSpec<f64>)> {
    let mut out = Vec::new();
    for sign in [Sign::Plus, Sign::Minus] {
        for (a, b) in [(cx(1.0, 0.0), cx(1.0, 0.0)), (cx(1.5, 0.0), cx(0.8, 0.0)), (cx(1.0, 0.0), cx(0.0, 1.0))] {
            out.push((format!("ECS{sign}({a},{b})"), StateSpec::ecs(a, b, sign)));
        }
        for m in [2, 3] {
            out.push((format!("GHZ{sign}(m={m})"), StateSpec::ghz(vec![cx(1.0, 0.0); m], sign)));
        }
    }
    out
}

fn uniform_strategy(spec: &StateSpec<f64>, t: TruncationConfig<f64>) -> Result<VerificationStrategy<f64>, String> {
    let settings = settings_for(spec, t, DetectorModel::pnrd(t.dim()).map_err(e2s)?).map_err(e2s)?;
    VerificationStrategy::uniform(settings).map_err(e2s)
}

fn theorem_conditions() -> Outcome {
    let t = tr(20, 1e-6);
    let mut worst = 1.0f64;
    let mut count = 0;
    for (name, spec) in theorem_cases() {
        let psi = build_state(&spec, t).map_err(e2s)?;
        let st = uniform_strategy(&spec, t)?;
        for s in st.settings() {
            let p = s.pass_probability(&psi).map_err(e2s)?;
            check(p >= 1.0 - 1e-7, format!("{name} {}: {p}", s.label))?;
            worst = worst.min(p);
            count += 1;
        }
    }
    Ok(format!("{count} settings, min ⟨ψ|Ω_l|ψ⟩ = 1 − {:.1e}", 1.0 - worst))
}

fn uniqueness() -> Outcome {
    let t = tr(14, 1e-5);
    let mut largest = f64::NEG_INFINITY;
    let mut methods = Vec::new();
    for (name, spec) in theorem_cases() {
        let st = uniform_strategy(&spec, t)?;
        let gap = spectral_gap(&st).map_err(e2s)?;
        check(gap.lambda2 < 1.0 - 1e-3, format!("{name}: λ₂ = {}", gap.lambda2))?;
        check((gap.lambda_max - 1.0).abs() < 1e-4, format!("{name}: λ_max = {}", gap.lambda_max))?;
        largest = largest.max(gap.lambda2);
        methods.push(format!("{name}:{:?}", gap.method));
    }
    Ok(format!("max λ₂ = {largest:.6} ({})", methods.join(" ")))
}

fn random_real(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Uniform phase, radius uniform in `[lo, hi)`.
fn random_polar(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> Complex64 {
    let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
    Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
}

fn local_equivalence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x10ca1);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let spec = if i % 2 == 0 {
            let v: Vec<f64> = (0..4).map(|_| random_real(&mut rng, -1.0, 1.0)).collect();
            StateSpec::ecs_general([cx(v[0], 0.0), cx(v[1], 0.0)], [cx(v[2], 0.0), cx(v[3], 0.0)], Sign::Plus)
        } else {
            let m = 2 + i % 4 / 2;
            let a: Vec<Complex64> = (0..m).map(|_| cx(random_real(&mut rng, -1.0, 1.0), 0.0)).collect();
            let b: Vec<Complex64> = (0..m).map(|_| cx(random_real(&mut rng, -1.0, 1.0), 0.0)).collect();
            StateSpec::ghz_general(&a, &b, if i % 3 == 0 { Sign::Minus } else { Sign::Plus })
        };
        let t = tr(if spec.num_modes() == 3 { 24 } else { 36 }, 1e-6);
        let rep = local_equivalence_transform(&spec).map_err(e2s)?;
        let moved = apply_equivalence(&build_state(&spec, t).map_err(e2s)?, &rep).map_err(e2s)?;
        let canon = build_state(&rep.canonical, t).map_err(e2s)?;
        let infid = 1.0 - fidelity(&moved, &canon).map_err(e2s)?;
        check(infid <= 1e-7, format!("spec {i}: infidelity {infid:e}"))?;
        worst = worst.max(infid);
    }

    let pi = std::f64::consts::PI;
    let mut worst_pass = 1.0f64;
    for i in 0..10 {
        // small first pair, then a second pair chosen so the phases add to π
        let (a1, b1) = (random_polar(&mut rng, 0.1, 0.5), random_polar(&mut rng, 0.1, 0.5));
        let a2 = random_polar(&mut rng, 1.8, 1.8);
        let rest = pi - (a1 * b1.conj()).im;
        let y = -rest / a2.norm_sqr();
        let b2 = a2 * cx(random_real(&mut rng, -0.2, 0.2), y);
        let spec = if i % 2 == 0 {
            StateSpec::ecs_general([a1, a2], [b1, b2], Sign::Plus)
        } else {
            StateSpec::ghz_general(&[a1, a2], &[b1, b2], Sign::Plus)
        };
        let rep = local_equivalence_transform(&spec).map_err(e2s)?;
        check(rep.protocol == Sign::Minus, format!("phase-π spec {i} selected the {} protocol", rep.protocol))?;
        let t = tr(50, 1e-8);
        let moved = apply_equivalence(&build_state(&spec, t).map_err(e2s)?, &rep).map_err(e2s)?;
        let settings = settings_for(&rep.canonical, t, DetectorModel::pnrd(50).map_err(e2s)?).map_err(e2s)?;
        for s in &settings {
            let p = s.pass_probability(&moved).map_err(e2s)?;
            check(p >= 1.0 - 1e-7, format!("phase-π spec {i} {}: {p}", s.label))?;
            worst_pass = worst_pass.min(p);
        }
    }
    Ok(format!("max infidelity {worst:.1e}; phase-π min pass 1 − {:.1e}", 1.0 - worst_pass))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x0ac1e);
    let t = tr(50, 1e-8);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let terms = rng.random_range(1..=4);
        let sup: Vec<(Complex64, Vec<Complex64>)> = (0..terms)
            .map(|_| {
                let c = cx(random_real(&mut rng, -1.0, 1.0), random_real(&mut rng, -1.0, 1.0));
                let amps = (0..2).map(|_| random_polar(&mut rng, 0.0, 1.5)).collect();
                (c, amps)
            })
            .collect();
        let sup = CoherentSuperposition::new(sup).map_err(e2s)?;
        if sup.norm_sqr_exact() < 1e-3 {
            continue;
        }
        let state = sup.to_state(t).map_err(e2s)?;
        let (a, b) = (random_polar(&mut rng, 0.2, 1.5), random_polar(&mut rng, 0.2, 1.5));
        for s in ecs_settings(a, b, Sign::Plus, t).map_err(e2s)?.iter().take(2) {
            let exact = pass_probability_exact(&sup, &s.recipe).map_err(e2s)?;
            let numeric = s.pass_probability(&state).map_err(e2s)?;
            check((exact - numeric).abs() <= 1e-7, format!("{}: {exact} vs {numeric}", s.label))?;
            worst = worst.max((exact - numeric).abs());
        }
        done += 1;
    }
    Ok(format!("50 superpositions, max |Δp| = {worst:.1e}"))
}

fn sampling_soundness() -> Outcome {
    let t = tr(25, 1e-8);
    let (settings, resp) = fitted_response(RECOVERED_ALPHA, t)?;
    let opt = optimize_mu(&resp.k_matrix).map_err(e2s)?;
    let (epsilon, delta) = (0.01, 0.01);
    let n = sample_complexity(opt.nu_opt, epsilon, delta).map_err(e2s)?.n_exact;

    let a = cx(RECOVERED_ALPHA, 0.0);
    let spec = StateSpec::ecs(a, a, Sign::Plus);
    let sup = spec.superposition().map_err(e2s)?;
    // ideal detectors: the bound is stated for the settings as analysed
    let st = strategy(ecs_settings(a, a, Sign::Plus, t).map_err(e2s)?, opt.mu.clone()).map_err(e2s)?;
    drop(settings);

    // the family the optimal strategy detects least well at this ε
    let mut worst: Option<(String, Source<f64>, ModeState<f64>, f64)> = None;
    for f in reference_families(RECOVERED_ALPHA) {
        let kappa = kappa_for_infidelity(&f, &sup, epsilon).map_err(e2s)?;
        let state = f.state(kappa, t).map_err(e2s)?;
        let pass = st.pass_probability(&state).map_err(e2s)?;
        if worst.as_ref().is_none_or(|w| pass > w.3) {
            worst = Some((f.label.clone(), Source::Noisy { family: f, kappa }, state, pass));
        }
    }
    let (label, source, state, pass) = worst.expect("four families");

    let mut rng = ChaCha20Rng::seed_from_u64(0xb0a1);
    let samples = 1_000_000u64;
    let mut born = Vec::new();
    for s in st.settings() {
        let sampler = SettingSampler::new(s, &state, None).map_err(e2s)?;
        let hits = (0..samples).filter(|_| sampler.sample(&mut rng) == RoundOutcome::Pass).count();
        let p = s.pass_probability(&state).map_err(e2s)?;
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        let z = (hits as f64 / samples as f64 - p) / sigma.max(1e-12);
        check(z.abs() < 4.0, format!("{}: z = {z:.2}", s.label))?;
        born.push(format!("{:+.2}", z));
    }

    let cfg = RunConfig {
        strategy: st,
        source,
        truncation: t,
        rounds: n,
        seed: 0x5eed,
        pnrd_resolution: None,
        saturation_policy: SaturationPolicy::DiscardResample,
    };
    let runs = 10_000;
    let curve = acceptance_curve(&cfg, &[n], runs).map_err(e2s)?;
    let (acc, se) = (curve[0].acceptance, curve[0].std_error);
    let bound_se = (delta * (1.0 - delta) / runs as f64).sqrt();
    check(acc <= delta + 3.0 * se.max(bound_se), format!("acceptance {acc} ± {se} after N = {n}"))?;
    Ok(format!(
        "Born z-scores [{}]; ν = {:.4}, N = {n}, worst family {label} (pass {pass:.5}), acceptance {acc:.4} ± {se:.4}",
        born.join(", "),
        opt.nu_opt
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("optimal mixing on the reference response matrix", 1, lp_regression),
        ("fitted response matrix", 60, end_to_end_fit),
        ("PNRD acceptance of the even cat state", 1, pnrd_remark),
        ("targets pass every generated setting", 120, theorem_conditions),
        ("unique +1 eigenvector of the uniform mixture", 120, uniqueness),
        ("local equivalence to canonical states", 60, local_equivalence),
        ("truncated numerics against the coherent-state oracle", 30, oracle_equivalence),
        ("Monte Carlo sampling soundness", 600, sampling_soundness),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = started.elapsed();
        let outcome = outcome.and_then(|msg| within(Duration::from_secs(*limit), took).map(|_| msg));
        match outcome {
            Ok(msg) => println!("PASS {} {name} [{:.2}s] {msg}", i + 1, took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name} [{:.2}s] {msg}", i + 1, took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
