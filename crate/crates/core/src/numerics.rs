//! Dense complex linear algebra: Hermitian eigendecomposition by cyclic
//! Jacobi rotations, orthonormalization, orthogonal projectors and a block
//! power iteration used as an independent check on the eigensolver.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{Cx, Real};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Cx<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(columns: &[Vec<Cx<T>>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("columns of unequal length".into()));
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    /// `v v^H`.
    pub fn outer(v: &[Cx<T>]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Cx<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<Cx<T>>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: T, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b * s;
        }
    }

    /// `self += w * v v^H`, the rank-one update used when averaging labels.
    pub fn add_outer(&mut self, w: T, v: &[Cx<T>]) {
        assert!(self.is_square() && self.rows == v.len());
        let n = self.rows;
        for i in 0..n {
            let vi = v[i] * w;
            let row = &mut self.data[i * n..(i + 1) * n];
            for (a, vj) in row.iter_mut().zip(v) {
                *a = *a + vi * vj.conj();
            }
        }
    }

    pub fn mat_vec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(self.cols, v.len());
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).fold(Complex::zero(), |acc, (a, b)| acc + a * b))
            .collect()
    }

    /// `self^H v`.
    pub fn adjoint_mat_vec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![Complex::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(&self.data[i * self.cols..(i + 1) * self.cols]) {
                *o = *o + a.conj() * vi;
            }
        }
        out
    }

    pub fn trace(&self) -> Cx<T> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest deviation from Hermitian symmetry, `max |a_ij - conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    pub fn real_diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).collect()
    }

    pub fn map_entries<U: Real>(&self, f: impl Fn(Cx<T>) -> Cx<U>) -> ComplexMatrix<U> {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Cx<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;

    fn mul(self, rhs: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(&rhs.data[k * n..(k + 1) * n]) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn add(self, rhs: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn sub(self, rhs: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// `a^H b`.
#[inline]
pub fn inner<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter().zip(b).fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm<T: Real>(v: &[Cx<T>]) -> T {
    norm_sqr(v).sqrt()
}

/// Spectral decomposition `A = V diag(eigenvalues) V^H` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig<T> {
    /// Sorted in descending order.
    pub eigenvalues: Vec<T>,
    /// Orthonormal columns aligned with `eigenvalues`.
    pub eigenvectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEig<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// First `q` eigenvectors as an `n x q` basis.
    pub fn top_basis(&self, q: usize) -> ComplexMatrix<T> {
        let idx: Vec<usize> = (0..q.min(self.dim())).collect();
        self.eigenvectors.select_columns(&idx)
    }

    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            out.add_outer(lam, &self.eigenvectors.column(k));
        }
        out
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or_else(T::zero)
    }

    /// Largest absolute eigenvalue, i.e. the spectral norm.
    pub fn spectral_norm(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |m, l| m.max(l.abs()))
    }
}

const MAX_JACOBI_SWEEPS: usize = 100;

/// Full eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. The input is symmetrized as `(A + A^H)/2` first.
pub fn hermitian_eig<T: Real>(a: &ComplexMatrix<T>) -> Result<HermitianEig<T>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("hermitian_eig input"));
    }
    let n = a.rows;
    let mut m = a.hermitian_part();
    for i in 0..n {
        m[(i, i)].im = T::zero();
    }
    let mut v = ComplexMatrix::<T>::identity(n);

    let scale = m.frobenius_norm();
    let eps = T::epsilon();
    let skip = eps * scale * T::lit(1e-3);
    let target = eps * scale;

    let mut converged = n <= 1 || scale == T::zero();
    let mut sweep = 0;
    while !converged && sweep < MAX_JACOBI_SWEEPS {
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.data[p * n + q];
                let r = apq.norm();
                if r <= skip {
                    continue;
                }
                rotate(&mut m, &mut v, p, q, apq, r);
            }
        }
        sweep += 1;
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + m.data[p * n + q].norm_sqr();
            }
        }
        converged = off.sqrt() <= target;
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigensolver",
            iterations: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = m.real_diagonal();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = v.select_columns(&order);
    fix_phases(&mut eigenvectors);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// One Jacobi rotation annihilating `m[p][q]`. With `a_pq = r e^{j phi}` the
/// unitary is `J = diag(1, e^{-j phi}) G`, where `G` is the real rotation that
/// diagonalizes `[[a_pp, r], [r, a_qq]]`.
fn rotate<T: Real>(
    m: &mut ComplexMatrix<T>,
    v: &mut ComplexMatrix<T>,
    p: usize,
    q: usize,
    apq: Cx<T>,
    r: T,
) {
    let n = m.rows;
    let app = m.data[p * n + p].re;
    let aqq = m.data[q * n + q].re;
    let theta = (aqq - app) / (r + r);
    let t = if theta.abs() > T::lit(1e150).min(T::max_value().sqrt()) {
        (theta + theta).recip()
    } else {
        let t = (theta.abs() + (theta * theta + T::one()).sqrt()).recip();
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = (t * t + T::one()).sqrt().recip();
    let s = t * c;
    let phase = apq / r;
    let phase_c = phase.conj();
    // J = [[c, s], [-s e^{-j phi}, c e^{-j phi}]]
    let j_pp = Complex::new(c, T::zero());
    let j_pq = Complex::new(s, T::zero());
    let j_qp = phase_c * (-s);
    let j_qq = phase_c * c;

    // A <- A J
    for k in 0..n {
        let akp = m.data[k * n + p];
        let akq = m.data[k * n + q];
        m.data[k * n + p] = akp * j_pp + akq * j_qp;
        m.data[k * n + q] = akp * j_pq + akq * j_qq;
    }
    // A <- J^H A
    let (cpp, cqp, cpq, cqq) = (j_pp.conj(), j_qp.conj(), j_pq.conj(), j_qq.conj());
    for k in 0..n {
        let apk = m.data[p * n + k];
        let aqk = m.data[q * n + k];
        m.data[p * n + k] = cpp * apk + cqp * aqk;
        m.data[q * n + k] = cpq * apk + cqq * aqk;
    }
    m.data[p * n + q] = Complex::zero();
    m.data[q * n + p] = Complex::zero();
    m.data[p * n + p].im = T::zero();
    m.data[q * n + q].im = T::zero();
    // V <- V J
    for k in 0..n {
        let vkp = v.data[k * n + p];
        let vkq = v.data[k * n + q];
        v.data[k * n + p] = vkp * j_pp + vkq * j_qp;
        v.data[k * n + q] = vkp * j_pq + vkq * j_qq;
    }
}

/// Rotates each column so that its largest-magnitude entry is real and
/// nonnegative.
pub fn fix_phases<T: Real>(m: &mut ComplexMatrix<T>) {
    for j in 0..m.cols {
        let mut best = 0;
        let mut best_mag = T::zero();
        for i in 0..m.rows {
            let mag = m[(i, j)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag == T::zero() {
            continue;
        }
        let rot = m[(best, j)].conj() / best_mag;
        for i in 0..m.rows {
            m[(i, j)] = m[(i, j)] * rot;
        }
        m[(best, j)].im = T::zero();
    }
}

/// Orthonormal basis of the column span of `u` (modified Gram-Schmidt with one
/// re-orthogonalization pass). Fails when the column-normalized input has a
/// singular value below [`Real::RANK_TOL`].
pub fn orthonormalize<T: Real>(u: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if !u.is_finite() {
        return Err(Error::NonFinite("orthonormalize input"));
    }
    let mut cols = u.columns();
    for c in cols.iter_mut() {
        let nrm = norm(c);
        if nrm == T::zero() {
            return Err(Error::RankDeficient { sigma_min: 0.0 });
        }
        c.iter_mut().for_each(|z| *z = *z / nrm);
    }
    if cols.len() > u.rows {
        return Err(Error::RankDeficient { sigma_min: 0.0 });
    }
    let normalized = ComplexMatrix::from_columns(&cols)?;
    let gram = &normalized.adjoint() * &normalized;
    let sigma_min = hermitian_eig(&gram)?.min_eigenvalue().max(T::zero()).sqrt();
    if sigma_min.as_f64() <= T::RANK_TOL {
        return Err(Error::RankDeficient {
            sigma_min: sigma_min.as_f64(),
        });
    }
    for j in 0..cols.len() {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let coef = inner(&done[i], &rest[0]);
                for (x, b) in rest[0].iter_mut().zip(&done[i]) {
                    *x = *x - b * coef;
                }
            }
        }
        let nrm = norm(&cols[j]);
        cols[j].iter_mut().for_each(|z| *z = *z / nrm);
    }
    ComplexMatrix::from_columns(&cols)
}

/// Orthogonal projector `U (U^H U)^{-1} U^H` onto the column span of `u`,
/// evaluated through a Cholesky factor of the Gram matrix.
pub fn projector_from_basis<T: Real>(u: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let n = u.rows;
    let r = u.cols;
    let gram = &u.adjoint() * u;
    let l = cholesky(&gram)?;
    // W = U L^{-H}: each row w solves L w^H = u^H by forward substitution.
    let mut w = ComplexMatrix::zeros(n, r);
    for row in 0..n {
        for i in 0..r {
            let mut acc = u[(row, i)].conj();
            for k in 0..i {
                acc = acc - l[(i, k)] * w[(row, k)].conj();
            }
            w[(row, i)] = (acc / l[(i, i)]).conj();
        }
    }
    Ok(&w * &w.adjoint())
}

/// Lower-triangular `L` with `A = L L^H` for Hermitian positive definite `A`.
fn cholesky<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let n = a.rows;
    let mut l = ComplexMatrix::zeros(n, n);
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(T::zero(), T::max);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d = d - l[(j, k)].norm_sqr();
        }
        if !(d > T::lit(T::RANK_TOL * T::RANK_TOL) * scale) {
            return Err(Error::RankDeficient {
                sigma_min: d.max(T::zero()).sqrt().as_f64(),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Projector `U U^H` for a basis already known to be orthonormal.
pub fn projector_from_orthonormal<T: Real>(u: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    &*u * &u.adjoint()
}

const MAX_POWER_ITERATIONS: usize = 10_000;

/// Dominant `q`-dimensional invariant subspace of a Hermitian PSD matrix by
/// block (orthogonal) iteration from a fixed pseudo-random start.
pub fn power_iteration_topq<T: Real>(a: &ComplexMatrix<T>, q: usize) -> Result<ComplexMatrix<T>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!("q = {q} for dimension {n}")));
    }
    let scale = a.frobenius_norm();
    if scale == T::zero() {
        return Err(Error::InvalidParameter("zero matrix".into()));
    }
    let mut rng = rng::rng_from(0x5eed, &[n as u64, q as u64]);
    let start = ComplexMatrix::from_fn(n, q, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::lit(re), T::lit(im))
    });
    let mut x = orthonormalize(&start)?;
    let tol = T::lit(T::RANK_TOL) * T::lit(1e-2) * scale;
    for _ in 0..MAX_POWER_ITERATIONS {
        let y = a * &x;
        x = orthonormalize(&y)?;
        let ax = a * &x;
        let ritz = &x.adjoint() * &ax;
        let resid = &ax - &(&x * &ritz);
        if resid.frobenius_norm() <= tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "block power iteration",
        iterations: MAX_POWER_ITERATIONS,
    })
}

/// Idempotence, Hermitian symmetry and trace defects of a claimed projector:
/// `(||P^2 - P||_F, max |p_ij - conj(p_ji)|, |tr P - rank|)`.
pub fn projector_defects<T: Real>(p: &ComplexMatrix<T>, rank: usize) -> (T, T, T) {
    let sq = p * p;
    let idem = (&sq - p).frobenius_norm();
    let herm = p.hermitian_defect();
    let tr = (p.trace().re - T::lit(rank as f64)).abs();
    (idem, herm, tr)
}
