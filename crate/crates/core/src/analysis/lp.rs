//! Maximin mixing of settings against noise families, as a small linear
//! program solved by a dense simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Entries slightly outside `[0, 1]` are tolerated as fit noise.
pub const K_SLACK: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult<T> {
    /// `max_μ min_i Σ_l μ_l k_{l,i}`.
    pub nu_opt: T,
    pub mu: Vec<T>,
    /// Families whose column value equals `nu_opt` within `1e-9`.
    pub active_families: Vec<usize>,
    /// Optimal dual distribution over families; `max_l (k y)_l` equals
    /// `nu_opt` by strong duality.
    pub certificate: Vec<T>,
    pub dual_value: T,
    /// `(kᵀμ)_i` for every family.
    pub column_values: Vec<T>,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    objective: Vec<T>,
    value: T,
}

impl<T: Real> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != T::zero() {
                for (x, &pr) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        let f = self.objective[c];
        if f != T::zero() {
            for (x, &pr) in self.objective.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            self.value -= f * pivot_rhs;
        }
        self.basis[r] = c;
    }

    /// Maximizes with Bland's rule, which cannot cycle.
    fn solve(&mut self) -> Result<()> {
        let eps = T::tol(1e-12);
        let cap = 10_000;
        for _ in 0..cap {
            let Some(c) = self.objective.iter().position(|&x| x < -eps) else {
                return Ok(());
            };
            let mut best: Option<(usize, T)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[c] > eps {
                    let ratio = self.rhs[r] / row[c];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - eps || ((ratio - bratio).abs() <= eps && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let (r, _) = best.ok_or_else(|| Error::Numeric("maximin program is unbounded".into()))?;
            self.pivot(r, c);
        }
        Err(Error::Numeric("simplex did not terminate".into()))
    }
}

fn validate<T: Real>(k: &[Vec<T>]) -> Result<usize> {
    let families = k.first().map(|r| r.len()).unwrap_or(0);
    if k.is_empty() || families == 0 {
        return Err(Error::ShapeMismatch("k matrix needs at least one setting and one family".into()));
    }
    if k.iter().any(|r| r.len() != families) {
        return Err(Error::ShapeMismatch("k matrix rows differ in length".into()));
    }
    let slack = T::lit(K_SLACK);
    if let Some(bad) = k.iter().flatten().find(|&&x| !x.is_finite() || x < -slack || x > T::one() + slack) {
        return Err(Error::BadRange(format!("k entry {bad} outside [0, 1]")));
    }
    Ok(families)
}

/// Solves `max t` subject to `kᵀμ >= t`, `Σμ <= 1`, `μ >= 0` (rows of `k` are
/// settings). Entries are clamped to be nonnegative first. When every column
/// is zero the program is degenerate and the uniform distribution is returned.
pub fn optimize_mu<T: Real>(k: &[Vec<T>]) -> Result<OptimizationResult<T>> {
    let families = validate(k)?;
    let settings = k.len();
    let kc: Vec<Vec<T>> = k.iter().map(|r| r.iter().map(|&x| x.max(T::zero())).collect()).collect();

    // columns: μ_0..μ_{L-1}, t, slack per family, slack for Σμ
    let t_col = settings;
    let width = settings + 1 + families + 1;
    let mut rows = Vec::with_capacity(families + 1);
    let mut rhs = Vec::with_capacity(families + 1);
    let mut basis = Vec::with_capacity(families + 1);
    for i in 0..families {
        let mut row = vec![T::zero(); width];
        for l in 0..settings {
            row[l] = -kc[l][i];
        }
        row[t_col] = T::one();
        row[t_col + 1 + i] = T::one();
        rows.push(row);
        rhs.push(T::zero());
        basis.push(t_col + 1 + i);
    }
    let mut row = vec![T::zero(); width];
    row[..settings].iter_mut().for_each(|x| *x = T::one());
    row[width - 1] = T::one();
    rows.push(row);
    rhs.push(T::one());
    basis.push(width - 1);
    let mut objective = vec![T::zero(); width];
    objective[t_col] = -T::one();

    let mut tab = Tableau { rows, rhs, basis, objective, value: T::zero() };
    tab.solve()?;

    let mut mu = vec![T::zero(); settings];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < settings {
            mu[b] = tab.rhs[r].max(T::zero());
        }
    }
    let total: T = mu.iter().copied().sum();
    if total > T::tol(1e-12) {
        mu.iter_mut().for_each(|x| *x /= total);
    } else {
        mu = vec![T::one() / T::from_usize_lossy(settings); settings];
    }
    let column_values: Vec<T> = (0..families).map(|i| (0..settings).map(|l| mu[l] * kc[l][i]).sum()).collect();
    let nu_opt = column_values.iter().copied().fold(T::infinity(), T::min);

    let mut certificate: Vec<T> = (0..families).map(|i| tab.objective[t_col + 1 + i].max(T::zero())).collect();
    let ysum: T = certificate.iter().copied().sum();
    if ysum > T::zero() {
        certificate.iter_mut().for_each(|y| *y /= ysum);
    }
    let dual_value = (0..settings)
        .map(|l| (0..families).map(|i| kc[l][i] * certificate[i]).sum::<T>())
        .fold(T::neg_infinity(), T::max);
    if (dual_value - nu_opt).abs() > T::tol(1e-8) {
        return Err(Error::Numeric(format!("duality gap {:e} after simplex", (dual_value - nu_opt).abs())));
    }
    let active_families = column_values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v - nu_opt <= T::tol(1e-9))
        .map(|(i, _)| i)
        .collect();
    Ok(OptimizationResult { nu_opt, mu, active_families, certificate, dual_value, column_values })
}
