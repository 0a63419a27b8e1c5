//! Physical operations on truncated modes: displacements, the beam splitter,
//! parity projectors and photon-detector effects.

use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_tail, digits, poisson_tail, ModeState, TruncationConfig};
use crate::linalg::{inner, CMatrix};
use crate::scalar::{c, cr, Real, C};

/// Relative sign of a two-branch superposition, or the parity eigenvalue a
/// projector selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Sign {
    #[default]
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn factor<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    /// Parity eigenvalue sign selected by an even/odd count.
    pub fn from_parity(odd: bool) -> Self {
        if odd {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Declared algebraic property of an operator, checked by
/// [`ModeOperator::check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    General,
    Hermitian,
    Projector,
    Unitary,
}

#[derive(Clone, Debug)]
enum Body<T> {
    /// Matrix over the footprint modes.
    Dense(CMatrix<T>),
    /// Real diagonal over the footprint modes.
    Diagonal(Vec<T>),
    /// `U† diag U` with `U` the tensor product of one matrix per footprint mode.
    Conjugated { local: Vec<CMatrix<T>>, diagonal: Vec<T> },
    /// Weighted sum of operators on the same system.
    Mixture(Vec<(T, ModeOperator<T>)>),
}

/// Operator on `num_modes` truncated modes that acts nontrivially only on
/// `footprint`.
#[derive(Clone, Debug)]
pub struct ModeOperator<T> {
    num_modes: usize,
    dim: usize,
    footprint: Vec<usize>,
    kind: OperatorKind,
    body: Body<T>,
}

impl<T: Real> ModeOperator<T> {
    fn validate_footprint(num_modes: usize, footprint: &[usize]) -> Result<()> {
        if footprint.is_empty() {
            return Err(Error::ShapeMismatch("operator footprint is empty".into()));
        }
        let mut seen = vec![false; num_modes];
        for &m in footprint {
            if m >= num_modes || seen[m] {
                return Err(Error::ShapeMismatch(format!("bad footprint {footprint:?} for {num_modes} modes")));
            }
            seen[m] = true;
        }
        Ok(())
    }

    /// Dense operator; `matrix` acts on the footprint modes in the order given.
    pub fn dense(num_modes: usize, dim: usize, footprint: Vec<usize>, matrix: CMatrix<T>, kind: OperatorKind) -> Result<Self> {
        Self::validate_footprint(num_modes, &footprint)?;
        let side = dim.pow(footprint.len() as u32);
        if matrix.n() != side {
            return Err(Error::ShapeMismatch(format!("matrix side {} but footprint needs {side}", matrix.n())));
        }
        Ok(Self { num_modes, dim, footprint, kind, body: Body::Dense(matrix) })
    }

    /// Single-mode operator from a `dim x dim` matrix.
    pub fn single_mode(matrix: CMatrix<T>, kind: OperatorKind) -> Self {
        let dim = matrix.n();
        Self { num_modes: 1, dim, footprint: vec![0], kind, body: Body::Dense(matrix) }
    }

    pub fn diagonal(num_modes: usize, dim: usize, footprint: Vec<usize>, diagonal: Vec<T>, kind: OperatorKind) -> Result<Self> {
        Self::validate_footprint(num_modes, &footprint)?;
        if diagonal.len() != dim.pow(footprint.len() as u32) {
            return Err(Error::ShapeMismatch("diagonal length does not match footprint".into()));
        }
        Ok(Self { num_modes, dim, footprint, kind, body: Body::Diagonal(diagonal) })
    }

    /// `U† diag U` with `U = local[0] ⊗ local[1] ⊗ ...` over `footprint`.
    pub fn conjugated(
        num_modes: usize,
        dim: usize,
        footprint: Vec<usize>,
        local: Vec<CMatrix<T>>,
        diagonal: Vec<T>,
        kind: OperatorKind,
    ) -> Result<Self> {
        Self::validate_footprint(num_modes, &footprint)?;
        if local.len() != footprint.len() || local.iter().any(|u| u.n() != dim) {
            return Err(Error::ShapeMismatch("one dim x dim conjugating matrix per footprint mode required".into()));
        }
        if diagonal.len() != dim.pow(footprint.len() as u32) {
            return Err(Error::ShapeMismatch("diagonal length does not match footprint".into()));
        }
        Ok(Self { num_modes, dim, footprint, kind, body: Body::Conjugated { local, diagonal } })
    }

    /// `Σ w_i O_i`; all terms must live on the same system.
    pub fn mixture(terms: Vec<(T, ModeOperator<T>)>, kind: OperatorKind) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::ShapeMismatch("empty mixture".into()))?;
        let (num_modes, dim) = (first.1.num_modes, first.1.dim);
        if terms.iter().any(|(_, o)| o.num_modes != num_modes || o.dim != dim) {
            return Err(Error::ShapeMismatch("mixture terms act on different systems".into()));
        }
        let mut footprint: Vec<usize> = terms.iter().flat_map(|(_, o)| o.footprint.iter().copied()).collect();
        footprint.sort_unstable();
        footprint.dedup();
        Ok(Self { num_modes, dim, footprint, kind, body: Body::Mixture(terms) })
    }

    pub fn identity(num_modes: usize, dim: usize) -> Self {
        Self {
            num_modes,
            dim,
            footprint: vec![0],
            kind: OperatorKind::Projector,
            body: Body::Diagonal(vec![T::one(); dim]),
        }
    }

    /// Places this operator into a system of `num_modes` modes, its current
    /// footprint mapped onto `modes`.
    pub fn embed(&self, num_modes: usize, modes: &[usize]) -> Result<Self> {
        if modes.len() != self.num_modes {
            return Err(Error::ShapeMismatch(format!("embedding {} modes into positions {modes:?}", self.num_modes)));
        }
        let relabel = |fp: &[usize]| fp.iter().map(|&m| modes[m]).collect::<Vec<_>>();
        let body = match &self.body {
            Body::Mixture(terms) => Body::Mixture(
                terms.iter().map(|(w, o)| o.embed(num_modes, modes).map(|o| (*w, o))).collect::<Result<_>>()?,
            ),
            other => other.clone(),
        };
        let footprint = relabel(&self.footprint);
        Self::validate_footprint(num_modes, &footprint)?;
        Ok(Self { num_modes, dim: self.dim, footprint, kind: self.kind, body })
    }

    #[inline]
    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn footprint(&self) -> &[usize] {
        &self.footprint
    }

    #[inline]
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn space_size(&self) -> usize {
        self.dim.pow(self.num_modes as u32)
    }

    /// Applies the operator to a flat amplitude vector of the full system.
    pub fn apply(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.space_size(), "vector does not match operator space");
        match &self.body {
            Body::Dense(m) => apply_local(v, self.num_modes, self.dim, &self.footprint, m),
            Body::Diagonal(d) => apply_diagonal(v, self.num_modes, self.dim, &self.footprint, d),
            Body::Conjugated { local, diagonal } => {
                let mut w = v.to_vec();
                for (&mode, u) in self.footprint.iter().zip(local) {
                    w = apply_local(&w, self.num_modes, self.dim, &[mode], u);
                }
                w = apply_diagonal(&w, self.num_modes, self.dim, &self.footprint, diagonal);
                for (&mode, u) in self.footprint.iter().zip(local) {
                    w = apply_local(&w, self.num_modes, self.dim, &[mode], &u.adjoint());
                }
                w
            }
            Body::Mixture(terms) => {
                let mut out = vec![C::zero(); v.len()];
                for (w, op) in terms {
                    for (o, x) in out.iter_mut().zip(op.apply(v)) {
                        *o += x * cr(*w);
                    }
                }
                out
            }
        }
    }

    fn check_state(&self, state: &ModeState<T>) -> Result<()> {
        if state.num_modes() != self.num_modes || state.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "operator on {} modes (dim {}) applied to state with {} modes (dim {})",
                self.num_modes,
                self.dim,
                state.num_modes(),
                state.dim()
            )));
        }
        Ok(())
    }

    pub fn apply_state(&self, state: &ModeState<T>) -> Result<ModeState<T>> {
        self.check_state(state)?;
        Ok(state.map_amplitudes(self.apply(state.amplitudes())))
    }

    /// `<state|O|state>`.
    pub fn expectation(&self, state: &ModeState<T>) -> Result<C<T>> {
        self.check_state(state)?;
        Ok(inner(state.amplitudes(), &self.apply(state.amplitudes())))
    }

    /// Matrix over the footprint modes (in footprint order).
    pub fn local_matrix(&self) -> CMatrix<T> {
        match &self.body {
            Body::Dense(m) => m.clone(),
            Body::Diagonal(d) => CMatrix::from_diagonal(d),
            Body::Conjugated { local, diagonal } => {
                let u = local.iter().skip(1).fold(local[0].clone(), |acc, m| acc.kron(m));
                u.adjoint().matmul(&CMatrix::from_diagonal(diagonal)).matmul(&u)
            }
            Body::Mixture(_) => {
                let reduced = self.embed_into_footprint();
                reduced.to_dense()
            }
        }
    }

    /// Same operator on the subsystem formed by its footprint only.
    fn embed_into_footprint(&self) -> Self {
        let k = self.footprint.len();
        let position = |m: usize| self.footprint.iter().position(|&f| f == m).expect("mode in footprint");
        let remap = |op: &ModeOperator<T>| -> ModeOperator<T> {
            let mut o = op.clone();
            o.num_modes = k;
            o.footprint = op.footprint.iter().map(|&m| position(m)).collect();
            if let Body::Mixture(_) = o.body {
                o = o.embed_into_footprint();
            }
            o
        };
        match &self.body {
            Body::Mixture(terms) => Self {
                num_modes: k,
                dim: self.dim,
                footprint: (0..k).collect(),
                kind: self.kind,
                body: Body::Mixture(terms.iter().map(|(w, o)| (*w, remap(o))).collect()),
            },
            _ => remap(self),
        }
    }

    /// Full matrix on the whole system. Intended for small systems only.
    pub fn to_dense(&self) -> CMatrix<T> {
        let n = self.space_size();
        let mut out = CMatrix::zeros(n);
        let mut e = vec![C::zero(); n];
        for j in 0..n {
            e[j] = C::one();
            let col = self.apply(&e);
            for (i, z) in col.into_iter().enumerate() {
                out.set(i, j, z);
            }
            e[j] = C::zero();
        }
        out
    }

    /// Verifies the declared [`OperatorKind`]: Hermitian `‖M − M†‖ < 1e-10`,
    /// projector additionally `‖M² − M‖ < 1e-8`, unitary `‖M†M − 1‖ < 1e-8`.
    /// Structured operators are checked through their factors.
    pub fn check(&self) -> Result<()> {
        let herm_tol = T::tol(1e-10);
        let proj_tol = T::tol(1e-8);
        match (&self.body, self.kind) {
            (_, OperatorKind::General) => Ok(()),
            (Body::Diagonal(d), kind) => {
                if kind == OperatorKind::Projector && d.iter().any(|&x| (x * x - x).abs() > proj_tol) {
                    return Err(Error::OperatorCheck("diagonal projector entries must be 0 or 1".into()));
                }
                if kind == OperatorKind::Unitary && d.iter().any(|&x| (x.abs() - T::one()).abs() > proj_tol) {
                    return Err(Error::OperatorCheck("diagonal unitary entries must have modulus 1".into()));
                }
                Ok(())
            }
            (Body::Conjugated { local, diagonal }, kind) => {
                for u in local {
                    let defect = u.adjoint().matmul(u).max_abs_diff(&CMatrix::identity(u.n()));
                    if defect > proj_tol {
                        return Err(Error::OperatorCheck(format!("conjugating factor not unitary (defect {defect:e})")));
                    }
                }
                Self::diagonal(self.footprint.len(), self.dim, (0..self.footprint.len()).collect(), diagonal.clone(), kind)?
                    .check()
            }
            (_, kind) => {
                let m = self.local_matrix();
                let herm = m.hermiticity_defect();
                match kind {
                    OperatorKind::Hermitian | OperatorKind::Projector if herm > herm_tol => {
                        return Err(Error::OperatorCheck(format!("not Hermitian (defect {herm:e})")));
                    }
                    OperatorKind::Projector => {
                        let idem = m.matmul(&m).max_abs_diff(&m);
                        if idem > proj_tol {
                            return Err(Error::OperatorCheck(format!("not idempotent (defect {idem:e})")));
                        }
                    }
                    OperatorKind::Unitary => {
                        let defect = m.adjoint().matmul(&m).max_abs_diff(&CMatrix::identity(m.n()));
                        if defect > proj_tol {
                            return Err(Error::OperatorCheck(format!("not unitary (defect {defect:e})")));
                        }
                    }
                    _ => {}
                }
                Ok(())
            }
        }
    }
}

/// Offsets of every local configuration of `modes` inside the flat vector,
/// and the base offsets of every configuration of the remaining modes.
fn index_tables(num_modes: usize, dim: usize, modes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let stride = |m: usize| dim.pow((num_modes - 1 - m) as u32);
    let k = modes.len();
    let local = (0..dim.pow(k as u32))
        .map(|j| digits(j, k, dim).iter().zip(modes).map(|(&d, &m)| d * stride(m)).sum())
        .collect();
    let rest: Vec<usize> = (0..num_modes).filter(|m| !modes.contains(m)).collect();
    let bases = (0..dim.pow(rest.len() as u32))
        .map(|j| digits(j, rest.len(), dim).iter().zip(&rest).map(|(&d, &m)| d * stride(m)).sum())
        .collect();
    (local, bases)
}

fn apply_local<T: Real>(v: &[C<T>], num_modes: usize, dim: usize, modes: &[usize], m: &CMatrix<T>) -> Vec<C<T>> {
    let (local, bases) = index_tables(num_modes, dim, modes);
    let mut out = vec![C::zero(); v.len()];
    let mut buf = vec![C::zero(); local.len()];
    for &b in &bases {
        for (slot, &off) in buf.iter_mut().zip(&local) {
            *slot = v[b + off];
        }
        for (i, &off_i) in local.iter().enumerate() {
            let row = m.row(i);
            let mut acc = C::zero();
            for (a, x) in row.iter().zip(&buf) {
                acc += a * x;
            }
            out[b + off_i] = acc;
        }
    }
    out
}

fn apply_diagonal<T: Real>(v: &[C<T>], num_modes: usize, dim: usize, modes: &[usize], d: &[T]) -> Vec<C<T>> {
    let (local, bases) = index_tables(num_modes, dim, modes);
    let mut out = vec![C::zero(); v.len()];
    for &b in &bases {
        for (&w, &off) in d.iter().zip(&local) {
            out[b + off] = v[b + off] * cr(w);
        }
    }
    out
}

/// Annihilation operator `a` in the truncated basis.
pub fn annihilation<T: Real>(dim: usize) -> CMatrix<T> {
    CMatrix::from_fn(dim, |i, j| if j == i + 1 { cr(T::from_usize_lossy(j).sqrt()) } else { C::zero() })
}

/// Generator `alpha a† − conj(alpha) a` of the displacement.
pub fn displacement_generator<T: Real>(alpha: C<T>, dim: usize) -> CMatrix<T> {
    let a = annihilation::<T>(dim);
    let adag = a.adjoint();
    adag.scale(alpha).sub(&a.scale(alpha.conj()))
}

fn check_displacement_tail<T: Real>(alpha: C<T>, trunc: &TruncationConfig<T>) -> Result<()> {
    check_tail(poisson_tail(alpha.norm_sqr(), trunc.dim()), trunc)
}

/// Matrix elements `<m|D(alpha)|n>` of the exact displacement operator for
/// `m, n < dim`, from associated Laguerre polynomials.
///
/// The result is the compression of a unitary, so it is unitary only away from
/// the cutoff (roughly below `dim − 4|alpha|√dim`).
pub fn displacement<T: Real>(alpha: C<T>, trunc: TruncationConfig<T>) -> Result<ModeOperator<T>> {
    check_displacement_tail(alpha, &trunc)?;
    Ok(ModeOperator::single_mode(laguerre_displacement(alpha, trunc.dim()), OperatorKind::General))
}

/// `exp(alpha a† − conj(alpha) a)` of the truncated generator. Exactly
/// unitary in the truncated space and equal to [`displacement`] away from the
/// cutoff. Used wherever displaced projectors must remain projectors.
pub fn displacement_unitary<T: Real>(alpha: C<T>, trunc: TruncationConfig<T>) -> Result<ModeOperator<T>> {
    check_displacement_tail(alpha, &trunc)?;
    Ok(ModeOperator::single_mode(displacement_matrix(alpha, trunc.dim()), OperatorKind::Unitary))
}

/// Raw unitary displacement matrix (see [`displacement_unitary`]).
pub fn displacement_matrix<T: Real>(alpha: C<T>, dim: usize) -> CMatrix<T> {
    if alpha.is_zero() {
        return CMatrix::identity(dim);
    }
    displacement_generator(alpha, dim).expm()
}

pub(crate) fn laguerre_displacement<T: Real>(alpha: C<T>, dim: usize) -> CMatrix<T> {
    let x = alpha.norm_sqr();
    let r = alpha.norm();
    let unit = if r > T::zero() { alpha / cr(r) } else { C::one() };
    let envelope = (-x / T::lit(2.0)).exp();
    let mut out = CMatrix::zeros(dim);
    for k in 0..dim {
        // L_j^{(k)}(x) for j = 0..dim-k by upward recurrence
        let len = dim - k;
        let mut lag = vec![T::zero(); len];
        lag[0] = T::one();
        if len > 1 {
            lag[1] = T::one() + T::from_usize_lossy(k) - x;
        }
        for j in 1..len.saturating_sub(1) {
            let jj = T::from_usize_lossy(j);
            let kk = T::from_usize_lossy(k);
            lag[j + 1] = ((T::lit(2.0) * jj + T::one() + kk - x) * lag[j] - (jj + kk) * lag[j - 1]) / (jj + T::one());
        }
        let up = unit.powu(k as u32);
        let down = (-unit.conj()).powu(k as u32);
        for (lo, &l) in lag.iter().enumerate() {
            let hi = lo + k;
            // sqrt(lo!/hi!) |alpha|^k
            let mut pref = T::one();
            for j in lo + 1..=hi {
                pref *= r / T::from_usize_lossy(j).sqrt();
            }
            let mag = envelope * pref * l;
            out.set(hi, lo, up * cr(mag));
            if k > 0 {
                out.set(lo, hi, down * cr(mag));
            }
        }
    }
    out
}

/// Two-mode beam splitter `exp(i theta (a† b + a b†))`, assembled block by
/// block in total photon number so it is exact for every block that fits the
/// cutoff.
pub fn beam_splitter<T: Real>(theta: T, trunc: TruncationConfig<T>) -> Result<ModeOperator<T>> {
    if !(theta > T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::BadRange(format!("beam splitter angle {theta} outside (0, pi/2)")));
    }
    let d = trunc.dim();
    let mut full = CMatrix::zeros(d * d);
    for total in 0..=(2 * (d - 1)) {
        let lo = total.saturating_sub(d - 1);
        let hi = total.min(d - 1);
        let size = hi - lo + 1;
        // basis |n, total-n>, n = lo..=hi
        let gen = CMatrix::from_fn(size, |i, j| {
            let (n_out, n_in) = (lo + i, lo + j);
            let m_in = total - n_in;
            let val = if n_out == n_in + 1 {
                // a† b
                T::from_usize_lossy((n_in + 1) * m_in).sqrt()
            } else if n_out + 1 == n_in {
                // a b†
                T::from_usize_lossy(n_in * (m_in + 1)).sqrt()
            } else {
                T::zero()
            };
            c(T::zero(), theta * val)
        });
        let u = gen.expm();
        for i in 0..size {
            for j in 0..size {
                let row = (lo + i) * d + (total - lo - i);
                let col = (lo + j) * d + (total - lo - j);
                full.set(row, col, u.get(i, j));
            }
        }
    }
    ModeOperator::dense(2, d, vec![0, 1], full, OperatorKind::Unitary)
}

/// Applies `B(theta)` to a two-mode state.
pub fn beam_splitter_apply<T: Real>(theta: T, state: &ModeState<T>) -> Result<ModeState<T>> {
    if state.num_modes() != 2 {
        return Err(Error::ShapeMismatch(format!("beam splitter needs two modes, got {}", state.num_modes())));
    }
    beam_splitter(theta, *state.truncation())?.apply_state(state)
}

/// Single-mode even and odd parity projectors `(π⁺, π⁻)`.
pub fn parity_projectors<T: Real>(trunc: TruncationConfig<T>) -> (ModeOperator<T>, ModeOperator<T>) {
    let d = trunc.dim();
    let even: Vec<T> = (0..d).map(|n| if n % 2 == 0 { T::one() } else { T::zero() }).collect();
    let odd: Vec<T> = even.iter().map(|&e| T::one() - e).collect();
    let mk = |diag| ModeOperator::diagonal(1, d, vec![0], diag, OperatorKind::Projector).expect("single-mode shape");
    (mk(even), mk(odd))
}

/// Diagonal of the projector onto the `sign` eigenspace of `π^{⊗m}`.
pub fn parity_diagonal<T: Real>(num_modes: usize, sign: Sign, dim: usize) -> Vec<T> {
    let want_odd = sign == Sign::Minus;
    (0..dim.pow(num_modes as u32))
        .map(|i| {
            let odd = digits(i, num_modes, dim).iter().sum::<usize>() % 2 == 1;
            if odd == want_odd {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Projector onto the `±1` eigenspace of `π^{⊗m}`.
pub fn multi_mode_parity_projector<T: Real>(num_modes: usize, sign: Sign, trunc: TruncationConfig<T>) -> Result<ModeOperator<T>> {
    if num_modes == 0 {
        return Err(Error::BadArity("parity projector needs at least one mode".into()));
    }
    ModeOperator::diagonal(
        num_modes,
        trunc.dim(),
        (0..num_modes).collect(),
        parity_diagonal(num_modes, sign, trunc.dim()),
        OperatorKind::Projector,
    )
}

/// Per-mode parity patterns (`true` = odd) whose number of odd modes has the
/// parity selected by `sign`.
pub fn parity_patterns(num_modes: usize, sign: Sign) -> Vec<Vec<bool>> {
    (0..1usize << num_modes)
        .map(|bits| (0..num_modes).map(|k| bits >> (num_modes - 1 - k) & 1 == 1).collect::<Vec<bool>>())
        .filter(|p| Sign::from_parity(p.iter().filter(|&&b| b).count() % 2 == 1) == sign)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Spd,
    Pnrd,
}

/// Ideal photon detector: a click detector, or a number-resolving detector
/// with outcomes `0..r-1` plus a saturation outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub resolution: usize,
}

impl DetectorModel {
    pub fn spd() -> Self {
        Self { kind: DetectorKind::Spd, resolution: 1 }
    }

    pub fn pnrd(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::BadRange("PNRD resolution must be >= 1".into()));
        }
        Ok(Self { kind: DetectorKind::Pnrd, resolution })
    }

    pub fn outcome_count(&self) -> usize {
        match self.kind {
            DetectorKind::Spd => 2,
            DetectorKind::Pnrd => self.resolution + 1,
        }
    }

    /// Outcome registered for `n` incident photons.
    pub fn outcome_for(&self, n: usize) -> usize {
        match self.kind {
            DetectorKind::Spd => usize::from(n > 0),
            DetectorKind::Pnrd => n.min(self.resolution),
        }
    }

    pub fn is_saturated(&self, outcome: usize) -> bool {
        self.kind == DetectorKind::Pnrd && outcome == self.resolution
    }

    /// Whether the outcome certifies at least one photon.
    pub fn clicked(&self, outcome: usize) -> bool {
        outcome > 0
    }
}

/// POVM elements of a detector, all diagonal in the Fock basis. Ordered as
/// SPD: `[|0><0|, 1 − |0><0|]`; PNRD(r): `[|0><0|, ..., |r−1><r−1|, saturation]`.
pub fn detector_effects<T: Real>(model: DetectorModel, trunc: TruncationConfig<T>) -> Vec<ModeOperator<T>> {
    let d = trunc.dim();
    (0..model.outcome_count())
        .map(|o| {
            let diag = (0..d).map(|n| if model.outcome_for(n) == o { T::one() } else { T::zero() }).collect();
            ModeOperator::diagonal(1, d, vec![0], diag, OperatorKind::Projector).expect("single-mode shape")
        })
        .collect()
}

/// Probability that a PNRD(r) on a one-mode state does not saturate,
/// `Σ_{i<r} |<i|ψ>|²`.
pub fn pnrd_acceptance<T: Real>(state: &ModeState<T>, resolution: usize) -> Result<T> {
    if state.num_modes() != 1 {
        return Err(Error::ShapeMismatch("PNRD acceptance is defined for one-mode states".into()));
    }
    Ok(state.amplitudes().iter().take(resolution).map(|z| z.norm_sqr()).sum::<T>() / state.norm_sqr())
}

/// `1 − pnrd_acceptance`, summed directly over the saturated levels so that
/// tiny losses are not lost to cancellation.
pub fn pnrd_loss<T: Real>(state: &ModeState<T>, resolution: usize) -> Result<T> {
    if state.num_modes() != 1 {
        return Err(Error::ShapeMismatch("PNRD loss is defined for one-mode states".into()));
    }
    Ok(state.amplitudes().iter().skip(resolution).map(|z| z.norm_sqr()).sum::<T>() / state.norm_sqr())
}

/// Applies single-mode operators mode by mode; `None` leaves a mode alone.
pub fn apply_product<T: Real>(state: &ModeState<T>, ops: &[Option<&CMatrix<T>>]) -> Result<ModeState<T>> {
    if ops.len() != state.num_modes() {
        return Err(Error::ShapeMismatch(format!("{} local operators for {} modes", ops.len(), state.num_modes())));
    }
    let mut amps = state.amplitudes().to_vec();
    for (mode, op) in ops.iter().enumerate() {
        if let Some(m) = op {
            if m.n() != state.dim() {
                return Err(Error::ShapeMismatch("local operator dimension differs from state cutoff".into()));
            }
            amps = apply_local(&amps, state.num_modes(), state.dim(), &[mode], m);
        }
    }
    Ok(state.map_amplitudes(amps))
}

/// Applies `⊗ D(alpha_i)` (unitary truncated displacements) to a state.
pub fn displace_modes<T: Real>(state: &ModeState<T>, alphas: &[C<T>]) -> Result<ModeState<T>> {
    if alphas.len() != state.num_modes() {
        return Err(Error::ShapeMismatch(format!("{} displacements for {} modes", alphas.len(), state.num_modes())));
    }
    for &a in alphas {
        check_displacement_tail(a, state.truncation())?;
    }
    let mats: Vec<Option<CMatrix<T>>> =
        alphas.iter().map(|&a| if a.is_zero() { None } else { Some(displacement_matrix(a, state.dim())) }).collect();
    let refs: Vec<Option<&CMatrix<T>>> = mats.iter().map(|m| m.as_ref()).collect();
    apply_product(state, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fidelity, tensor};
    use num_complex::Complex64;

    fn tr(d: usize) -> TruncationConfig<f64> {
        TruncationConfig::new(d, 1e-10).unwrap()
    }

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cat(alpha: f64, sign: Sign, t: TruncationConfig<f64>) -> ModeState<f64> {
        let p = coherent_state(cx(alpha, 0.0), t).unwrap();
        let m = coherent_state(cx(-alpha, 0.0), t).unwrap();
        let s = sign.factor::<f64>();
        let amps = p.amplitudes().iter().zip(m.amplitudes()).map(|(a, b)| a + b * s).collect();
        ModeState::from_amplitudes(1, amps, t).unwrap().normalized().unwrap()
    }

    fn interior(alpha: f64, dim: usize) -> usize {
        dim.saturating_sub((4.0 * alpha.abs() * (dim as f64).sqrt()).ceil() as usize)
    }

    #[test]
    fn zero_displacement_is_identity() {
        let d = displacement(cx(0.0, 0.0), tr(12)).unwrap();
        assert!(d.local_matrix().max_abs_diff(&CMatrix::identity(12)) < 1e-15);
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let t = tr(25);
        let d = displacement(cx(1.0, 0.0), t).unwrap();
        let out = d.apply_state(&ModeState::vacuum(1, t)).unwrap();
        let coh = coherent_state(cx(1.0, 0.0), t).unwrap();
        for (a, b) in out.amplitudes().iter().zip(coh.amplitudes()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn laguerre_and_exponential_builds_agree_in_interior() {
        for &(re, im) in &[(1.0, 0.0), (0.3, -0.8), (-1.4, 1.2), (0.0, 2.0)] {
            let alpha = cx(re, im);
            let dim = 80;
            let a = laguerre_displacement(alpha, dim);
            let b = displacement_matrix(alpha, dim);
            let k = interior(alpha.norm(), dim);
            assert!(k > 0);
            let diff = a.leading_block(k).max_abs_diff(&b.leading_block(k));
            assert!(diff < 1e-8, "alpha={alpha} diff={diff:e}");
        }
    }

    #[test]
    fn laguerre_displacement_unitary_in_interior() {
        let alpha = cx(0.7, 0.4);
        let dim = 40;
        let d = laguerre_displacement(alpha, dim);
        let k = interior(alpha.norm(), dim);
        let prod = d.adjoint().matmul(&d);
        assert!(prod.leading_block(k).max_abs_diff(&CMatrix::identity(k)) < 1e-8);
    }

    #[test]
    fn displacement_composition_phase() {
        let (a, b) = (cx(0.5, 0.0), cx(0.0, 0.3));
        let dim = 30;
        let lhs = laguerre_displacement(a, dim).matmul(&laguerre_displacement(b, dim));
        let phase = cx(0.0, (a * b.conj()).im).exp();
        let rhs = laguerre_displacement(a + b, dim).scale(phase);
        let k = interior((a + b).norm(), dim);
        assert!(lhs.leading_block(k).max_abs_diff(&rhs.leading_block(k)) < 1e-7);
    }

    #[test]
    fn unitary_displacement_is_unitary() {
        let d = displacement_unitary(cx(1.2, -0.5), tr(20)).unwrap();
        d.check().unwrap();
    }

    #[test]
    fn displacement_tail_check() {
        assert!(matches!(displacement(cx(4.0, 0.0), tr(10)), Err(Error::TailTooLarge { .. })));
    }

    #[test]
    fn beam_splitter_vacuum_invariant() {
        let t = tr(10);
        let vac = ModeState::vacuum(2, t);
        for theta in [0.1, 0.7, 1.5] {
            let out = beam_splitter_apply(theta, &vac).unwrap();
            assert!((fidelity(&out, &vac).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn beam_splitter_on_coherent_product() {
        let t = tr(25);
        let theta = std::f64::consts::FRAC_PI_4;
        let alpha = cx(1.0, 0.0);
        let input = tensor(&[coherent_state(alpha, t).unwrap(), coherent_state(cx(0.0, 0.0), t).unwrap()]).unwrap();
        let out = beam_splitter_apply(theta, &input).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = tensor(&[coherent_state(cx(s, 0.0), t).unwrap(), coherent_state(cx(0.0, s), t).unwrap()]).unwrap();
        assert!(1.0 - fidelity(&out, &expect).unwrap() < 1e-7);
    }

    #[test]
    fn beam_splitter_general_coherent_inputs() {
        let t = tr(30);
        let theta = 0.6f64;
        let (a, b) = (cx(0.8, -0.3), cx(-0.4, 0.9));
        let input = tensor(&[coherent_state(a, t).unwrap(), coherent_state(b, t).unwrap()]).unwrap();
        let out = beam_splitter_apply(theta, &input).unwrap();
        let i = cx(0.0, 1.0);
        let a2 = a * theta.cos() + i * b * theta.sin();
        let b2 = b * theta.cos() + i * a * theta.sin();
        let expect = tensor(&[coherent_state(a2, t).unwrap(), coherent_state(b2, t).unwrap()]).unwrap();
        assert!(1.0 - fidelity(&out, &expect).unwrap() < 1e-9);
    }

    #[test]
    fn beam_splitter_on_even_cat_gives_entangled_pair() {
        let t = tr(25);
        let theta = std::f64::consts::FRAC_PI_4;
        let input = tensor(&[cat(1.0, Sign::Plus, t), ModeState::vacuum(1, t)]).unwrap();
        let out = beam_splitter_apply(theta, &input).unwrap();
        let (cth, sth) = (theta.cos(), theta.sin());
        let plus = tensor(&[coherent_state(cx(cth, 0.0), t).unwrap(), coherent_state(cx(0.0, sth), t).unwrap()]).unwrap();
        let minus = tensor(&[coherent_state(cx(-cth, 0.0), t).unwrap(), coherent_state(cx(0.0, -sth), t).unwrap()]).unwrap();
        let amps = plus.amplitudes().iter().zip(minus.amplitudes()).map(|(a, b)| a + b).collect();
        let expect = ModeState::from_amplitudes(2, amps, t).unwrap().normalized().unwrap();
        assert!(1.0 - fidelity(&out, &expect).unwrap() < 1e-7);
    }

    #[test]
    fn beam_splitter_rejects_bad_angle() {
        assert!(matches!(beam_splitter(0.0, tr(5)), Err(Error::BadRange(_))));
        assert!(matches!(beam_splitter(2.0, tr(5)), Err(Error::BadRange(_))));
    }

    #[test]
    fn parity_projectors_on_fock_and_cats() {
        let t = tr(25);
        let (pe, po) = parity_projectors(t);
        let vac = ModeState::vacuum(1, t);
        assert!((pe.expectation(&vac).unwrap().re - 1.0).abs() < 1e-15);
        assert!(po.expectation(&vac).unwrap().norm() < 1e-15);
        let even = cat(1.0, Sign::Plus, t);
        let odd = cat(1.0, Sign::Minus, t);
        assert!((pe.expectation(&even).unwrap().re - 1.0).abs() < 1e-10);
        assert!((po.expectation(&odd).unwrap().re - 1.0).abs() < 1e-10);
        pe.check().unwrap();
        let sum = pe.to_dense().add(&po.to_dense());
        assert!(sum.max_abs_diff(&CMatrix::identity(25)) < 1e-15);
        assert!(pe.to_dense().matmul(&po.to_dense()).max_abs() < 1e-15);
    }

    #[test]
    fn multi_mode_parity_reductions() {
        let t = tr(6);
        let (pe, po) = parity_projectors(t);
        let single = multi_mode_parity_projector(1, Sign::Plus, t).unwrap();
        assert!(single.to_dense().max_abs_diff(&pe.to_dense()) < 1e-15);

        let two = multi_mode_parity_projector(2, Sign::Plus, t).unwrap().to_dense();
        let expect = pe.to_dense().kron(&pe.to_dense()).add(&po.to_dense().kron(&po.to_dense()));
        assert!(two.max_abs_diff(&expect) < 1e-15);
        let two_minus = multi_mode_parity_projector(2, Sign::Minus, t).unwrap().to_dense();
        assert!(two.add(&two_minus).max_abs_diff(&CMatrix::identity(36)) < 1e-15);
    }

    #[test]
    fn parity_pattern_expansion() {
        assert_eq!(parity_patterns(3, Sign::Plus).len(), 4);
        assert_eq!(parity_patterns(3, Sign::Minus).len(), 4);
        assert_eq!(parity_patterns(1, Sign::Plus), vec![vec![false]]);
        let t = tr(4);
        let (pe, po) = parity_projectors(t);
        for sign in [Sign::Plus, Sign::Minus] {
            let mut sum = CMatrix::zeros(64);
            for pat in parity_patterns(3, sign) {
                let factors: Vec<CMatrix<f64>> = pat.iter().map(|&odd| if odd { po.to_dense() } else { pe.to_dense() }).collect();
                let k = factors[1..].iter().fold(factors[0].clone(), |acc, f| acc.kron(f));
                sum = sum.add(&k);
            }
            let direct = multi_mode_parity_projector(3, sign, t).unwrap().to_dense();
            assert!(sum.max_abs_diff(&direct) < 1e-15);
        }
    }

    #[test]
    fn detector_effects_form_povms() {
        let t = tr(12);
        for model in [DetectorModel::spd(), DetectorModel::pnrd(1).unwrap(), DetectorModel::pnrd(5).unwrap(), DetectorModel::pnrd(12).unwrap()] {
            let effects = detector_effects(model, t);
            assert_eq!(effects.len(), model.outcome_count());
            let mut sum = CMatrix::zeros(12);
            for e in &effects {
                e.check().unwrap();
                let m = e.to_dense();
                assert!(m.hermiticity_defect() < 1e-15);
                for i in 0..12 {
                    assert!(m.get(i, i).re > -1e-10);
                }
                sum = sum.add(&m);
            }
            assert!(sum.max_abs_diff(&CMatrix::identity(12)) < 1e-12);
        }
        assert_eq!(detector_effects(DetectorModel::pnrd(5).unwrap(), t).len(), 6);
        let spd = detector_effects(DetectorModel::spd(), t);
        assert!((spd[0].expectation(&ModeState::vacuum(1, t)).unwrap().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pnrd_efficiency_of_even_cat() {
        let t = tr(30);
        let even = cat(1.0, Sign::Plus, t);
        let p3 = pnrd_acceptance(&even, 3).unwrap();
        assert!((p3 - 0.972).abs() < 1e-3, "{p3}");
        assert!(pnrd_loss(&even, 20).unwrap() <= 1e-15);
        assert!((pnrd_acceptance(&even, 30).unwrap() - 1.0).abs() < 1e-14);
        let mut last = 0.0;
        for r in 1..30 {
            let p = pnrd_acceptance(&even, r).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn embed_and_local_matrix() {
        let t = tr(4);
        let (pe, _) = parity_projectors(t);
        let e = pe.embed(3, &[2]).unwrap();
        assert_eq!(e.footprint(), &[2]);
        let dense = e.to_dense();
        let id = CMatrix::<f64>::identity(16);
        assert!(dense.max_abs_diff(&id.kron(&pe.to_dense())) < 1e-15);
    }

    #[test]
    fn f32_parity_and_displacement() {
        let t = TruncationConfig::new(16, 1e-6f32).unwrap();
        let d = displacement_unitary(num_complex::Complex32::new(0.5, 0.0), t).unwrap();
        let out = d.apply_state(&ModeState::vacuum(1, t)).unwrap();
        let coh = coherent_state(num_complex::Complex32::new(0.5, 0.0), t).unwrap();
        assert!(1.0 - fidelity(&out, &coh).unwrap() < 1e-5);
    }
}
