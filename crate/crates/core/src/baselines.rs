//! Conventional Type-II references: orthogonal DFT beam selection and OMP over
//! an oversampled DFT dictionary. Both see the true channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inner, norm_sqr, ComplexMatrix};
use crate::probing::{dft_codebook, dft_dictionary};
use crate::scalar::{Cx, Real};
use crate::subspace::SubspaceDecision;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    DftSelect,
    DftOmp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub variant: BaselineVariant,
    pub oversample: usize,
    pub q: usize,
}

impl BaselineConfig {
    pub fn dft_select(q: usize) -> Self {
        Self { variant: BaselineVariant::DftSelect, oversample: 1, q }
    }

    pub fn dft_omp(q: usize) -> Self {
        Self { variant: BaselineVariant::DftOmp, oversample: 4, q }
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversample == 0 {
            return Err(Error::InvalidParameter("oversample must be >= 1".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidParameter("Q must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        match self.variant {
            BaselineVariant::DftSelect => "conv_t2_dft".into(),
            BaselineVariant::DftOmp => format!("conv_t2_omp{}", self.oversample),
        }
    }
}

/// Precomputed dictionary for repeated baseline evaluation.
#[derive(Clone, Debug)]
pub struct Baseline<T> {
    config: BaselineConfig,
    dictionary: ComplexMatrix<T>,
}

impl<T: Real> Baseline<T> {
    pub fn new(config: BaselineConfig, n_t: usize) -> Result<Self> {
        config.validate()?;
        let dictionary = match config.variant {
            BaselineVariant::DftSelect => dft_codebook(n_t).beams().clone(),
            BaselineVariant::DftOmp => dft_dictionary(n_t, config.oversample)?.beams().clone(),
        };
        Ok(Self { config, dictionary })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn decide(&self, h: &[Cx<T>]) -> Result<SubspaceDecision<T>> {
        let d = match self.config.variant {
            BaselineVariant::DftSelect => select_strongest(h, &self.dictionary, self.config.q)?,
            BaselineVariant::DftOmp => omp_subspace(h, &self.dictionary, self.config.q)?,
        };
        Ok(d.with_scheme(self.config.tag()))
    }
}

/// The `q` orthogonal DFT columns with the largest `|b_k^H h|^2`.
pub fn dft_select<T: Real>(h: &[Cx<T>], q: usize) -> Result<SubspaceDecision<T>> {
    select_strongest(h, dft_codebook(h.len()).beams(), q)
}

fn select_strongest<T: Real>(h: &[Cx<T>], dict: &ComplexMatrix<T>, q: usize) -> Result<SubspaceDecision<T>> {
    if norm_sqr(h) == T::zero() {
        return Err(Error::ZeroChannel);
    }
    if q == 0 || q > dict.cols() {
        return Err(Error::InvalidParameter(format!("Q = {q} for {} columns", dict.cols())));
    }
    let corr = dict.adjoint_mat_vec(h);
    let mut order: Vec<usize> = (0..dict.cols()).collect();
    order.sort_by(|&a, &b| corr[b].norm_sqr().partial_cmp(&corr[a].norm_sqr()).unwrap().then(a.cmp(&b)));
    order.truncate(q);
    order.sort_unstable();
    Ok(SubspaceDecision::from_orthonormal(dict.select_columns(&order), "conv_t2_dft"))
}

/// Trace of an OMP run.
#[derive(Clone, Debug, PartialEq)]
pub struct OmpTrace<T> {
    pub selected: Vec<usize>,
    /// `||r||^2` before the first pick and after every pick.
    pub residual_norms_sqr: Vec<T>,
    pub skipped: Vec<usize>,
}

/// Orthogonal matching pursuit; returns the decision and its trace.
pub fn omp<T: Real>(h: &[Cx<T>], dictionary: &ComplexMatrix<T>, q: usize) -> Result<(SubspaceDecision<T>, OmpTrace<T>)> {
    let n = h.len();
    if dictionary.rows() != n {
        return Err(Error::DimensionMismatch(format!("dictionary rows {} vs N_t {n}", dictionary.rows())));
    }
    if q == 0 || q > dictionary.cols() || q > n {
        return Err(Error::InvalidParameter(format!("Q = {q} for {} columns", dictionary.cols())));
    }
    let h_norm = norm_sqr(h);
    if h_norm == T::zero() {
        return Err(Error::ZeroChannel);
    }
    let cols = dictionary.columns();
    let col_norms: Vec<T> = cols.iter().map(|c| norm_sqr(c)).collect();
    let dep_tol = T::lit(1e-8);
    let mut residual = h.to_vec();
    let mut basis: Vec<Vec<Cx<T>>> = Vec::with_capacity(q);
    let mut trace = OmpTrace { selected: Vec::new(), residual_norms_sqr: vec![h_norm], skipped: Vec::new() };
    let mut excluded = vec![false; cols.len()];
    while basis.len() < q {
        let mut best: Option<(usize, T)> = None;
        for (k, c) in cols.iter().enumerate() {
            if excluded[k] || col_norms[k] == T::zero() {
                continue;
            }
            let score = inner(c, &residual).norm_sqr() / col_norms[k];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        let Some((k, _)) = best else {
            return Err(Error::RankDeficient { sigma_min: 0.0 });
        };
        excluded[k] = true;
        let mut v = cols[k].clone();
        for _ in 0..2 {
            for b in &basis {
                let c = inner(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x = *x - y * c;
                }
            }
        }
        let nv = norm_sqr(&v);
        if nv <= dep_tol * col_norms[k] {
            trace.skipped.push(k);
            continue;
        }
        let s = nv.sqrt();
        v.iter_mut().for_each(|z| *z = *z / s);
        let c = inner(&v, &residual);
        for (x, y) in residual.iter_mut().zip(&v) {
            *x = *x - y * c;
        }
        basis.push(v);
        trace.selected.push(k);
        trace.residual_norms_sqr.push(norm_sqr(&residual));
    }
    let decision = SubspaceDecision::from_orthonormal(ComplexMatrix::from_columns(&basis)?, "conv_t2_omp");
    Ok((decision, trace))
}

pub fn omp_subspace<T: Real>(h: &[Cx<T>], dictionary: &ComplexMatrix<T>, q: usize) -> Result<SubspaceDecision<T>> {
    omp(h, dictionary, q).map(|(d, _)| d)
}

/// Dictionary indices picked by OMP, in selection order.
pub fn omp_indices<T: Real>(h: &[Cx<T>], dictionary: &ComplexMatrix<T>, q: usize) -> Result<Vec<usize>> {
    omp(h, dictionary, q).map(|(_, t)| t.selected)
}
