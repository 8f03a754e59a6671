//! Projector-based CSI representation: capture efficiency, MRT inside a
//! subspace, dominant rank-Q eigenspace extraction and the effective-rate
//! objective.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numerics::{
    hermitian_eig, inner, norm, norm_sqr, orthonormalize, projector_from_orthonormal, ComplexMatrix,
};
use crate::scalar::{Cx, Real};

/// Rank-Q subspace chosen by a feedback rule.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceDecision<T> {
    /// `N_t x Q`, orthonormal columns.
    pub basis: ComplexMatrix<T>,
    /// `basis basis^H`.
    pub projector: ComplexMatrix<T>,
    pub rank_q: usize,
    pub scheme: String,
}

impl<T: Real> SubspaceDecision<T> {
    /// Wraps a basis that is already orthonormal.
    pub fn from_orthonormal(basis: ComplexMatrix<T>, scheme: impl Into<String>) -> Self {
        let projector = projector_from_orthonormal(&basis);
        Self {
            rank_q: basis.cols(),
            basis,
            projector,
            scheme: scheme.into(),
        }
    }

    /// Orthonormalizes arbitrary full-rank columns first.
    pub fn from_columns(columns: &ComplexMatrix<T>, scheme: impl Into<String>) -> Result<Self> {
        Ok(Self::from_orthonormal(orthonormalize(columns)?, scheme))
    }

    pub fn n_t(&self) -> usize {
        self.basis.rows()
    }

    pub fn with_scheme(mut self, scheme: impl Into<String>) -> Self {
        self.scheme = scheme.into();
        self
    }

    /// Capture efficiency through the basis, `sum_i |u_i^H h|^2 / ||h||^2`.
    pub fn capture(&self, h: &[Cx<T>]) -> Result<T> {
        let hn = norm_sqr(h);
        if hn == T::zero() {
            return Err(Error::ZeroChannel);
        }
        let coeffs = self.basis.adjoint_mat_vec(h);
        Ok(norm_sqr(&coeffs) / hn)
    }
}

/// `||P h||^2 / ||h||^2`.
pub fn capture_efficiency<T: Real>(projector: &ComplexMatrix<T>, h: &[Cx<T>]) -> Result<T> {
    let hn = norm_sqr(h);
    if hn == T::zero() {
        return Err(Error::ZeroChannel);
    }
    Ok(norm_sqr(&projector.mat_vec(h)) / hn)
}

/// Unit beamformer `P h / ||P h||`.
pub fn mrt_within_subspace<T: Real>(projector: &ComplexMatrix<T>, h: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
    let ph = projector.mat_vec(h);
    let n = norm(&ph);
    if n <= T::lit(1e-12).max(T::epsilon()) {
        return Err(Error::DegenerateCapture);
    }
    Ok(ph.into_iter().map(|z| z / n).collect())
}

/// Projector onto the dominant `q`-dimensional eigenspace of a Hermitian
/// matrix.
pub fn rank_q_extract<T: Real>(a: &ComplexMatrix<T>, q: usize, scheme: &str) -> Result<SubspaceDecision<T>> {
    if q > a.rows() || q == 0 {
        return Err(Error::InvalidParameter(format!("rank {q} for dimension {}", a.rows())));
    }
    let eig = hermitian_eig(a)?;
    Ok(SubspaceDecision::from_orthonormal(eig.top_basis(q), scheme))
}

/// PSD matrix held as `sum_i w_i v_i v_i^H` with `w_i >= 0`.
///
/// Fused covariance estimates are sums of a few dozen rank-one terms, so the
/// dominant eigenspace comes from the small Gram matrix `W^H W` where
/// `W = [sqrt(w_i) v_i]` instead of an `N_t x N_t` eigenproblem.
#[derive(Clone, Debug, Default)]
pub struct LowRankPsd<T> {
    terms: Vec<(T, Vec<Cx<T>>)>,
}

impl<T: Real> LowRankPsd<T> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn push(&mut self, weight: T, v: Vec<Cx<T>>) {
        debug_assert!(weight >= T::zero());
        if weight > T::zero() {
            self.terms.push((weight, v));
        }
    }

    /// Appends every term of `other` with its weight multiplied by `s`.
    pub fn extend_scaled(&mut self, other: LowRankPsd<T>, s: T) {
        for (w, v) in other.terms {
            self.push(w * s, v);
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn trace(&self) -> T {
        self.terms.iter().map(|(w, v)| *w * norm_sqr(v)).sum()
    }

    pub fn to_dense(&self, n: usize) -> ComplexMatrix<T> {
        let mut out = ComplexMatrix::zeros(n, n);
        for (w, v) in &self.terms {
            out.add_outer(*w, v);
        }
        out
    }

    /// Same contract as [`rank_q_extract`] on the dense matrix. When the sum
    /// has rank below `q` the basis is completed with directions from its
    /// null space, which are all tied at eigenvalue zero.
    pub fn dominant_subspace(&self, n: usize, q: usize, scheme: &str) -> Result<SubspaceDecision<T>> {
        if q > n || q == 0 {
            return Err(Error::InvalidParameter(format!("rank {q} for dimension {n}")));
        }
        let r = self.terms.len();
        let scaled: Vec<Vec<Cx<T>>> = self
            .terms
            .iter()
            .map(|(w, v)| {
                let s = w.sqrt();
                v.iter().map(|z| z * s).collect()
            })
            .collect();
        let mut basis: Vec<Vec<Cx<T>>> = Vec::with_capacity(q);
        if r > 0 {
            let gram = ComplexMatrix::from_fn(r, r, |i, j| inner(&scaled[i], &scaled[j]));
            let eig = hermitian_eig(&gram)?;
            let floor = eig.eigenvalues[0] * T::lit(T::RANK_TOL);
            for k in 0..r.min(q) {
                let lam = eig.eigenvalues[k];
                if !(lam > floor) {
                    break;
                }
                let mut v: Vec<Cx<T>> = vec![Complex::zero(); n];
                for (i, w) in scaled.iter().enumerate() {
                    let c = eig.eigenvectors[(i, k)];
                    for (o, x) in v.iter_mut().zip(w) {
                        *o = *o + x * c;
                    }
                }
                let nv = norm(&v);
                basis.push(v.into_iter().map(|z| z / nv).collect());
            }
            reorthogonalize(&mut basis);
        }
        let mut e = 0;
        while basis.len() < q && e < n {
            let mut v: Vec<Cx<T>> = vec![Complex::zero(); n];
            v[e] = Complex::new(T::one(), T::zero());
            e += 1;
            for b in &basis {
                let c = inner(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x = *x - y * c;
                }
            }
            let nv = norm(&v);
            if nv > T::lit(0.5) {
                basis.push(v.into_iter().map(|z| z / nv).collect());
                reorthogonalize(&mut basis);
            }
        }
        let mut m = ComplexMatrix::from_columns(&basis)?;
        crate::numerics::fix_phases(&mut m);
        Ok(SubspaceDecision::from_orthonormal(m, scheme))
    }
}

fn reorthogonalize<T: Real>(basis: &mut [Vec<Cx<T>>]) {
    for j in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(j);
        let v = &mut rest[0];
        for b in done.iter() {
            let c = inner(b, v);
            for (x, y) in v.iter_mut().zip(b) {
                *x = *x - y * c;
            }
        }
        let nv = norm(v);
        v.iter_mut().for_each(|z| *z = *z / nv);
    }
}

/// Reference capture-power loss of the extracted subspace and its upper bound:
/// `loss = tr[(Pi_Q(R) - Pi_Q(A)) R]`, `bound = 2 Q ||A - R||_2`.
pub fn kyfan_loss_and_bound<T: Real>(a_mix: &ComplexMatrix<T>, r_true: &ComplexMatrix<T>, q: usize) -> Result<(T, T)> {
    if a_mix.rows() != r_true.rows() || !a_mix.is_square() || !r_true.is_square() {
        return Err(Error::DimensionMismatch("A_mix and R must be equal-size square".into()));
    }
    let p_ref = rank_q_extract(r_true, q, "reference")?.projector;
    let p_hat = rank_q_extract(a_mix, q, "estimate")?.projector;
    let diff = &p_ref - &p_hat;
    let loss = (&diff * r_true).trace().re;
    let spec = hermitian_eig(&(a_mix - r_true))?.spectral_norm();
    Ok((loss, T::lit(2.0 * q as f64) * spec))
}

/// `(1 - T_o/T) log2(1 + rho eta)` with `rho` given in dB.
pub fn effective_rate<T: Real>(eta: T, rho_db: T, overhead_uses: u32, coherence_uses: u32) -> Result<T> {
    if coherence_uses == 0 || overhead_uses > coherence_uses {
        return Err(Error::InvalidParameter(format!(
            "overhead {overhead_uses} exceeds coherence interval {coherence_uses}"
        )));
    }
    if !(eta >= T::zero() && eta <= T::one() + T::lit(T::CHECK_TOL)) {
        return Err(Error::InvalidParameter(format!("capture efficiency {eta} outside [0, 1]")));
    }
    let rho = T::lit(10.0).powf(rho_db / T::lit(10.0));
    let useful = T::one() - T::lit(f64::from(overhead_uses) / f64::from(coherence_uses));
    Ok(useful * (T::one() + rho * eta).log2())
}
