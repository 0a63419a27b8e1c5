//! Small dense complex linear algebra used throughout the crate: square
//! matrices, the matrix exponential, Hermitian eigenvalues (Householder
//! tridiagonalization followed by implicit QL) and a Lanczos solver for the
//! top of the spectrum of large Hermitian operators given only as a
//! matrix-vector product.

use num_complex::Complex;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = cr(d);
        }
        m
    }

    /// Builds a matrix from row-major data; `data.len()` must be a square.
    pub fn from_row_major(n: usize, data: Vec<C<T>>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C<T>) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.n, "mul_vec dimension mismatch");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).fold(C::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// Kronecker product `self ⊗ other`; `self` indexes the slower digit.
    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.n, other.n);
        Self::from_fn(n * m, |i, j| self.get(i / m, j / m) * other.get(i % m, j % m))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).fold(T::zero(), |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// Largest entry of `|M - M†|`.
    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Restriction to the leading `k x k` block.
    pub fn leading_block(&self, k: usize) -> Self {
        Self::from_fn(k.min(self.n), |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> C<T> {
        (0..self.n).map(|i| self.get(i, i)).fold(C::zero(), |a, b| a + b)
    }

    /// Matrix exponential by scaling and squaring of a Taylor series.
    pub fn expm(&self) -> Self {
        let norm = self.norm1();
        let half = T::lit(0.5);
        let mut squarings = 0u32;
        let mut scale = T::one();
        while norm * scale > half {
            scale = scale * half;
            squarings += 1;
        }
        let a = self.scale(cr(scale));
        let mut sum = Self::identity(self.n);
        let mut term = Self::identity(self.n);
        for k in 1..40 {
            term = term.matmul(&a).scale(cr(T::one() / T::from_usize_lossy(k)));
            sum = sum.add(&term);
            if term.max_abs() <= T::epsilon() * T::lit(0.01) {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }
}

/// Conjugate-linear inner product `<a|b>`.
pub fn inner<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(C::zero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Real>(a: &[C<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigenvalues of a Hermitian matrix in descending order.
///
/// Reduces to real symmetric tridiagonal form with complex Householder
/// reflections and runs implicit QL on the result.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Result<Vec<T>> {
    let (diag, off) = householder_tridiagonal(m);
    let (mut vals, _) = tridiagonal_eigen(&diag, &off, false)?;
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(vals)
}

/// Householder reduction of a Hermitian matrix; returns the real diagonal and
/// the moduli of the (complex) subdiagonal, which together define a real
/// symmetric tridiagonal matrix with the same spectrum.
fn householder_tridiagonal<T: Real>(m: &CMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.n();
    let mut a = m.clone();
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    for k in 0..n.saturating_sub(1) {
        let len = n - k - 1;
        let x: Vec<C<T>> = (0..len).map(|i| a.get(k + 1 + i, k)).collect();
        let xnorm = norm_sqr(&x).sqrt();
        let tail = x.iter().skip(1).map(|z| z.norm_sqr()).sum::<T>();
        if tail <= T::min_positive_value() || xnorm == T::zero() {
            off[k] = x[0].norm();
            continue;
        }
        let phase = if x[0].norm() > T::zero() { x[0] / cr(x[0].norm()) } else { C::one() };
        let alpha = -phase * cr(xnorm);
        let mut v = x.clone();
        v[0] -= alpha;
        let vnorm = norm_sqr(&v).sqrt();
        for z in v.iter_mut() {
            *z = *z / cr(vnorm);
        }
        // p = B v on the trailing block
        let base = k + 1;
        let mut p = vec![C::zero(); len];
        for i in 0..len {
            let row = &a.data[(base + i) * n + base..(base + i) * n + n];
            p[i] = row.iter().zip(&v).fold(C::zero(), |acc, (&b, &vv)| acc + b * vv);
        }
        let kk = inner(&v, &p).re;
        let w: Vec<C<T>> = p.iter().zip(&v).map(|(&pp, &vv)| pp - vv * cr(kk)).collect();
        let two = cr(T::lit(2.0));
        for i in 0..len {
            for j in 0..len {
                let upd = two * (v[i] * w[j].conj() + w[i] * v[j].conj());
                let idx = (base + i) * n + base + j;
                a.data[idx] -= upd;
            }
        }
        off[k] = alpha.norm();
        for i in 0..len {
            a.set(base + i, k, C::zero());
            a.set(k, base + i, C::zero());
        }
    }
    let diag = (0..n).map(|i| a.get(i, i).re).collect();
    (diag, off)
}

/// Eigen-decomposition of the real symmetric tridiagonal matrix with diagonal
/// `d` and off-diagonal `e` (`e[i]` couples `i` and `i+1`) by implicit QL with
/// Wilkinson shifts. Eigenvectors, when requested, are returned as columns:
/// `vectors[row][col]`.
pub fn tridiagonal_eigen<T: Real>(d: &[T], e: &[T], want_vectors: bool) -> Result<(Vec<T>, Option<Vec<Vec<T>>>)> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e: Vec<T> = e.iter().copied().chain(std::iter::once(T::zero())).take(n).collect();
    let mut z = if want_vectors {
        let mut z = vec![vec![T::zero(); n]; n];
        for (i, row) in z.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Some(z)
    } else {
        None
    };
    let two = T::lit(2.0);
    // absolute floor: clusters of near-zero eigenvalues never meet a relative test
    let anorm = d.iter().zip(&e).map(|(a, b)| a.abs() + b.abs()).fold(T::zero(), T::max);
    let floor = T::epsilon() * anorm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd + floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    for row in z.iter_mut() {
                        f = row[i + 1];
                        row[i + 1] = s * row[i] + c * f;
                        row[i] = c * row[i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z))
}

/// Outcome of a Lanczos run.
#[derive(Clone, Debug)]
pub struct LanczosResult<T> {
    /// Leading Ritz values, descending.
    pub values: Vec<T>,
    /// Residual bounds `|β_j s_{j,i}|` for each returned value.
    pub residuals: Vec<T>,
    pub iterations: usize,
}

/// Largest `count` eigenvalues of the Hermitian operator `apply` on `C^n`,
/// by Lanczos with full reorthogonalization. Restarts with a fresh random
/// direction on breakdown so invariant subspaces missed by the start vector
/// are still explored.
pub fn lanczos_top<T: Real>(
    n: usize,
    count: usize,
    apply: impl Fn(&[C<T>]) -> Vec<C<T>>,
    tol: T,
    max_iter: usize,
    seed: u64,
) -> Result<LanczosResult<T>> {
    if n == 0 || count == 0 {
        return Err(Error::ShapeMismatch("empty Lanczos problem".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut random_unit = |basis: &[Vec<C<T>>]| -> Option<Vec<C<T>>> {
        for _ in 0..8 {
            let mut v: Vec<C<T>> = (0..n)
                .map(|_| Complex::new(T::lit(rng.random::<f64>() - 0.5), T::lit(rng.random::<f64>() - 0.5)))
                .collect();
            orthogonalize(&mut v, basis);
            orthogonalize(&mut v, basis);
            let nv = norm_sqr(&v).sqrt();
            if nv > T::lit(1e-6) {
                v.iter_mut().for_each(|z| *z = *z / cr(nv));
                return Some(v);
            }
        }
        None
    };

    let limit = max_iter.min(n);
    let mut basis: Vec<Vec<C<T>>> = Vec::with_capacity(limit);
    let mut alphas: Vec<T> = Vec::with_capacity(limit);
    let mut betas: Vec<T> = Vec::with_capacity(limit);
    let mut v = random_unit(&basis).ok_or_else(|| Error::Numeric("could not draw Lanczos start".into()))?;
    let mut last = LanczosResult { values: vec![], residuals: vec![], iterations: 0 };

    for j in 0..limit {
        let mut w = apply(&v);
        let a = inner(&v, &w).re;
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= vi * cr(a);
        }
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= pi * cr(b);
            }
        }
        basis.push(v);
        alphas.push(a);
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, &basis);
        let mut b = norm_sqr(&w).sqrt();

        let k = alphas.len();
        let check = k >= count && (k % 5 == 0 || k == limit || b <= tol);
        if check {
            let (vals, vecs) = tridiagonal_eigen(&alphas, &betas, true)?;
            let vecs = vecs.expect("vectors requested");
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap_or(std::cmp::Ordering::Equal));
            let top: Vec<usize> = order.into_iter().take(count).collect();
            let values: Vec<T> = top.iter().map(|&i| vals[i]).collect();
            let residuals: Vec<T> = top.iter().map(|&i| (b * vecs[k - 1][i]).abs()).collect();
            let done = residuals.iter().all(|&r| r <= tol) && values.len() == count;
            last = LanczosResult { values, residuals, iterations: k };
            if done && k >= 2 * count {
                return Ok(last);
            }
        }
        if j + 1 == limit {
            break;
        }
        if b <= tol {
            // invariant subspace; continue in its orthogonal complement
            match random_unit(&basis) {
                Some(fresh) => {
                    v = fresh;
                    b = T::zero();
                }
                None => break,
            }
        } else {
            v = w.into_iter().map(|z| z / cr(b)).collect();
        }
        betas.push(b);
    }
    if last.values.len() < count {
        return Err(Error::Numeric("Lanczos produced fewer Ritz values than requested".into()));
    }
    Ok(last)
}

fn orthogonalize<T: Real>(v: &mut [C<T>], basis: &[Vec<C<T>>]) {
    for q in basis {
        let proj = inner(q, v);
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi -= qi * proj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, cr(rng.random::<f64>() - 0.5));
            for j in 0..i {
                let z = Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                m.set(i, j, z);
                m.set(j, i, z.conj());
            }
        }
        m
    }

    /// Cyclic real Jacobi on the symmetric embedding [[A, -B], [B, A]] of
    /// H = A + iB; every eigenvalue of H appears twice.
    fn jacobi_eigenvalues(m: &CMatrix<f64>) -> Vec<f64> {
        let n = m.n();
        let size = 2 * n;
        let mut a = vec![vec![0.0f64; size]; size];
        for i in 0..n {
            for j in 0..n {
                let z = m.get(i, j);
                a[i][j] = z.re;
                a[i + n][j + n] = z.re;
                a[i][j + n] = -z.im;
                a[i + n][j] = z.im;
            }
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..size {
                for q in 0..size {
                    if p != q {
                        off += a[p][q] * a[p][q];
                    }
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..size {
                for q in p + 1..size {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..size {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..size {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..size).map(|i| a[i][i]).collect();
        v.sort_by(|x, y| y.partial_cmp(x).unwrap());
        v.into_iter().step_by(2).collect()
    }

    #[test]
    fn householder_ql_matches_jacobi() {
        for seed in 0..4 {
            let m = random_hermitian(17, seed);
            let a = hermitian_eigenvalues(&m).unwrap();
            let b = jacobi_eigenvalues(&m);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn trace_is_preserved() {
        let m = random_hermitian(30, 9);
        let vals = hermitian_eigenvalues(&m).unwrap();
        let s: f64 = vals.iter().sum();
        assert!((s - m.trace().re).abs() < 1e-10);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let m = random_hermitian(60, 3);
        let dense = hermitian_eigenvalues(&m).unwrap();
        let res = lanczos_top(60, 3, |v| m.mul_vec(v), 1e-10, 60, 7).unwrap();
        for i in 0..3 {
            assert!((res.values[i] - dense[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn lanczos_survives_degenerate_top() {
        // diag(1,1,0.5,0,...): the start vector spans a 2-dim top eigenspace
        let mut diag = vec![0.0f64; 40];
        diag[0] = 1.0;
        diag[1] = 1.0;
        diag[2] = 0.5;
        let m = CMatrix::from_diagonal(&diag);
        let res = lanczos_top(40, 3, |v| m.mul_vec(v), 1e-10, 40, 1).unwrap();
        assert!((res.values[0] - 1.0).abs() < 1e-9);
        assert!((res.values[1] - 1.0).abs() < 1e-9);
        assert!((res.values[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn expm_of_antihermitian_is_unitary() {
        let h = random_hermitian(12, 5).scale(Complex::new(0.0, 3.0));
        let u = h.expm();
        let prod = u.adjoint().matmul(&u);
        assert!(prod.max_abs_diff(&CMatrix::identity(12)) < 1e-12);
    }

    #[test]
    fn expm_diagonal() {
        let m = CMatrix::from_diagonal(&[0.0, 1.0, -2.0]);
        let e = m.expm();
        assert!((e.get(1, 1).re - 1f64.exp()).abs() < 1e-13);
        assert!((e.get(2, 2).re - (-2f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn f32_eigenvalues() {
        let m = CMatrix::<f32>::from_fn(4, |i, j| if i == j { cr(i as f32) } else { cr(0.1) });
        let v = hermitian_eigenvalues(&m).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v.iter().sum::<f32>() - 6.0).abs() < 1e-4);
    }
}
