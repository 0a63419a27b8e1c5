//! Linear response of each setting's pass probability to the infidelity of a
//! noise family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::NoisyFamily;
use crate::error::{Error, Result};
use crate::fock::{fidelity, ModeState, TruncationConfig};
use crate::protocols::MeasurementSetting;
use crate::scalar::Real;

/// Largest infidelity accepted in a fit.
pub const EPSILON_CEILING: f64 = 0.05;
/// Smallest accepted ratio between the largest and smallest infidelity.
pub const MIN_SPAN: f64 = 10.0;
/// Below this response the cell is treated as exactly zero.
const ZERO_RESPONSE: f64 = 1e-10;

/// Samples of one family: `κ`, infidelity, and `1 − tr(Ω_l σ)` per setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySamples<T> {
    pub kappa: Vec<T>,
    pub epsilon: Vec<T>,
    /// Indexed `[setting][point]`.
    pub failure: Vec<Vec<T>>,
}

/// Fitted `tr(Ω_l σ_i) = 1 − k_{l,i} ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseResponse<T> {
    pub setting_labels: Vec<String>,
    pub family_labels: Vec<String>,
    /// Rows are settings, columns families.
    pub k_matrix: Vec<Vec<T>>,
    /// Uncentered coefficient of determination of each slope fit.
    pub r_squared: Vec<Vec<T>>,
    /// `[min ε, max ε]` per family.
    pub epsilon_range: Vec<[T; 2]>,
    pub samples: Vec<FamilySamples<T>>,
}

impl<T: Real> NoiseResponse<T> {
    pub fn num_settings(&self) -> usize {
        self.k_matrix.len()
    }

    pub fn num_families(&self) -> usize {
        self.family_labels.len()
    }

    pub fn min_r_squared(&self) -> T {
        self.r_squared.iter().flatten().copied().fold(T::one(), T::min)
    }
}

/// Least-squares slope through the origin of `y` against `x`, and the
/// uncentered `r² = 1 − Σ(y − kx)² / Σy²`. A response that is zero to
/// numerical precision gives `k = 0`, `r² = 1`.
pub fn fit_slope<T: Real>(x: &[T], y: &[T]) -> (T, T) {
    let ymax = y.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if ymax <= T::lit(ZERO_RESPONSE) {
        return (T::zero(), T::one());
    }
    let sxx: T = x.iter().map(|&v| v * v).sum();
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let k = sxy / sxx;
    let ss_res: T = x.iter().zip(y).map(|(&a, &b)| (b - k * a) * (b - k * a)).sum();
    let ss_tot: T = y.iter().map(|&v| v * v).sum();
    let k = if k < T::zero() && k > -T::lit(ZERO_RESPONSE) { T::zero() } else { k };
    (k, T::one() - ss_res / ss_tot)
}

fn check_window<T: Real>(label: &str, eps: &[T]) -> Result<[T; 2]> {
    let lo = eps.iter().copied().fold(T::infinity(), T::min);
    let hi = eps.iter().copied().fold(T::zero(), T::max);
    let degenerate = |reason: String| Error::DegenerateFit { family: label.to_string(), reason };
    if !(hi > T::zero()) {
        return Err(degenerate("infidelity is zero at every grid point".into()));
    }
    if hi > T::lit(EPSILON_CEILING) {
        return Err(Error::BadRange(format!("family '{label}' reaches infidelity {hi}, above {EPSILON_CEILING}")));
    }
    if !(lo > T::zero()) || hi / lo < T::lit(MIN_SPAN) {
        return Err(degenerate(format!("infidelity window [{lo:e}, {hi:e}] spans less than a decade")));
    }
    Ok([lo, hi])
}

/// Evaluates every `(family, κ)` point in parallel and fits one slope per
/// `(setting, family)` cell. Families must carry a nonempty `kappa_grid`.
pub fn fit_noise_response<T: Real>(
    settings: &[MeasurementSetting<T>],
    target: &ModeState<T>,
    families: &[NoisyFamily<T>],
    trunc: TruncationConfig<T>,
) -> Result<NoiseResponse<T>> {
    if settings.is_empty() || families.is_empty() {
        return Err(Error::ShapeMismatch("need at least one setting and one family".into()));
    }
    for f in families {
        if f.kappa_grid.is_empty() {
            return Err(Error::BadSpec(format!("family '{}' has an empty κ grid", f.label)));
        }
    }
    let points: Vec<(usize, T)> =
        families.iter().enumerate().flat_map(|(i, f)| f.kappa_grid.iter().map(move |&k| (i, k))).collect();
    // (ε, per-setting failure) in grid order regardless of scheduling
    let evaluated: Vec<(T, Vec<T>)> = points
        .par_iter()
        .map(|&(i, kappa)| {
            let phi = families[i].state(kappa, trunc)?;
            let eps = (T::one() - fidelity(&phi, target)?).max(T::zero());
            let fail = settings.iter().map(|s| Ok(T::one() - s.pass_probability(&phi)?)).collect::<Result<Vec<T>>>()?;
            Ok((eps, fail))
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(families.len());
    let mut epsilon_range = Vec::with_capacity(families.len());
    let mut cursor = 0;
    for f in families {
        let chunk = &evaluated[cursor..cursor + f.kappa_grid.len()];
        cursor += f.kappa_grid.len();
        let epsilon: Vec<T> = chunk.iter().map(|(e, _)| *e).collect();
        epsilon_range.push(check_window(&f.label, &epsilon)?);
        let failure = (0..settings.len()).map(|l| chunk.iter().map(|(_, y)| y[l]).collect()).collect();
        samples.push(FamilySamples { kappa: f.kappa_grid.clone(), epsilon, failure });
    }

    let mut k_matrix = vec![vec![T::zero(); families.len()]; settings.len()];
    let mut r_squared = k_matrix.clone();
    for (i, s) in samples.iter().enumerate() {
        for l in 0..settings.len() {
            let (k, r2) = fit_slope(&s.epsilon, &s.failure[l]);
            k_matrix[l][i] = k;
            r_squared[l][i] = r2;
        }
    }
    Ok(NoiseResponse {
        setting_labels: settings.iter().map(|s| s.label.clone()).collect(),
        family_labels: families.iter().map(|f| f.label.clone()).collect(),
        k_matrix,
        r_squared,
        epsilon_range,
        samples,
    })
}
