//! Projector-labelled calibration memory, cosine retrieval, multi-scale
//! neighbour averaging, confidence-weighted fusion and the acquisition rule.

use serde::{Deserialize, Serialize};

use crate::channel::UeChannel;
use crate::error::{Error, Result};
use crate::numerics::{norm, ComplexMatrix};
use crate::parametric::{predict_subspace, BeamScorerModel};
use crate::probing::{make_key, measure_rsrp, CalibrationKey, Codebook, KeyDomain, RsrpFingerprint};
use crate::scalar::{Cx, Real};
use crate::subspace::{LowRankPsd, SubspaceDecision};

const LABEL_NOTE: &str = "rank-1 stored as unit eigenvector";

/// RSRP measurement settings shared by calibration and serving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub tx_power_dbm: f64,
    pub noise_sigma_db: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self { tx_power_dbm: 40.0, noise_sigma_db: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MemoryEntry<T> {
    pub key: CalibrationKey<T>,
    /// Unit vector `v` with label `v v^H`.
    pub label_eigvec: Vec<Cx<T>>,
    #[serde(default)]
    pub ue_id: u64,
    #[serde(default = "label_note")]
    pub label_note: String,
}

fn label_note() -> String {
    LABEL_NOTE.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationMemory<T> {
    pub site_id: u32,
    pub codebook_id: String,
    #[serde(default)]
    pub key_domain: KeyDomain,
    pub entries: Vec<MemoryEntry<T>>,
}

impl<T: Real> CalibrationMemory<T> {
    pub fn new(site_id: u32, codebook_id: impl Into<String>, key_domain: KeyDomain) -> Self {
        Self { site_id, codebook_id: codebook_id.into(), key_domain, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores the direction of `h` as a rank-one label.
    pub fn push(&mut self, key: CalibrationKey<T>, h: &[Cx<T>], ue_id: u64) -> Result<()> {
        let n = norm(h);
        if n == T::zero() {
            return Err(Error::ZeroChannel);
        }
        if let Some(first) = self.entries.first() {
            if first.key.len() != key.len() || first.label_eigvec.len() != h.len() {
                return Err(Error::DimensionMismatch("memory entry shape".into()));
            }
        }
        self.entries.push(MemoryEntry {
            key,
            label_eigvec: h.iter().map(|z| z / n).collect(),
            ue_id,
            label_note: label_note(),
        });
        Ok(())
    }

    /// Dense label `v v^H` of entry `i`.
    pub fn label(&self, i: usize) -> ComplexMatrix<T> {
        ComplexMatrix::outer(&self.entries[i].label_eigvec)
    }

    pub fn n_t(&self) -> Option<usize> {
        self.entries.first().map(|e| e.label_eigvec.len())
    }

    pub fn keys(&self) -> Vec<CalibrationKey<T>> {
        self.entries.iter().map(|e| e.key.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(T::CHECK_TOL);
        for e in &self.entries {
            let kn: T = e.key.as_slice().iter().map(|x| *x * *x).sum();
            if (kn.sqrt() - T::one()).abs() > tol {
                return Err(Error::InvalidParameter("memory key is not unit norm".into()));
            }
            if (norm(&e.label_eigvec) - T::one()).abs() > tol {
                return Err(Error::InvalidParameter("memory label is not unit trace".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Measures each calibration channel with the serving codebook and stores
/// `(key, h / ||h||)`.
pub fn build_memory<T: Real>(
    site_id: u32,
    channels: &[UeChannel<T>],
    codebook: &Codebook<T>,
    meas: &MeasurementConfig,
    key_domain: KeyDomain,
    seed: u64,
) -> Result<CalibrationMemory<T>> {
    let mut mem = CalibrationMemory::new(site_id, codebook.id(), key_domain);
    for ch in channels {
        let fp = measure_rsrp(ch, codebook, meas.tx_power_dbm, meas.noise_sigma_db, seed)?;
        mem.push(make_key(&fp, key_domain)?, &ch.h, ch.ue_id)?;
    }
    Ok(mem)
}

/// Unit keys from per-UE dB fingerprints.
pub fn keys_from_rsrp<T: Real>(rsrp: &[Vec<T>], domain: KeyDomain) -> Result<Vec<CalibrationKey<T>>> {
    rsrp.iter()
        .map(|r| {
            let fp = RsrpFingerprint { values_db: r.clone(), codebook_id: String::new(), noise_sigma_db: 0.0 };
            make_key(&fp, domain)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval<T> {
    pub indices: Vec<usize>,
    pub similarities: Vec<T>,
    /// Requested size when it had to be clamped to the memory size.
    pub clamped_from: Option<usize>,
}

fn rank_keys<'a, T: Real + 'a>(
    query: &CalibrationKey<T>,
    keys: impl Iterator<Item = &'a CalibrationKey<T>>,
    m: usize,
) -> Vec<(usize, T)> {
    let mut sims: Vec<(usize, T)> = keys.map(|k| query.cosine(k)).enumerate().collect();
    let cmp = |a: &(usize, T), b: &(usize, T)| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
    };
    let m = m.min(sims.len());
    if m == 0 {
        return Vec::new();
    }
    if m < sims.len() {
        sims.select_nth_unstable_by(m - 1, cmp);
        sims.truncate(m);
    }
    sims.sort_by(cmp);
    sims
}

/// Indices of the `m` most similar entries, most similar first.
pub fn retrieve_neighbors<T: Real>(query: &CalibrationKey<T>, memory: &CalibrationMemory<T>, m: usize) -> Result<Retrieval<T>> {
    if m == 0 {
        return Err(Error::InvalidParameter("neighbourhood size must be >= 1".into()));
    }
    let clamped_from = (m > memory.len()).then(|| {
        log::warn!("neighbourhood size {m} clamped to memory size {}", memory.len());
        m
    });
    let ranked = rank_keys(query, memory.entries.iter().map(|e| &e.key), m);
    Ok(Retrieval {
        indices: ranked.iter().map(|r| r.0).collect(),
        similarities: ranked.iter().map(|r| r.1).collect(),
        clamped_from,
    })
}

/// Arithmetic mean of the selected labels.
pub fn neighbor_projector_average<T: Real>(memory: &CalibrationMemory<T>, indices: &[usize]) -> Result<ComplexMatrix<T>> {
    if indices.is_empty() {
        return Err(Error::Empty("neighbour list"));
    }
    let n = memory.n_t().ok_or(Error::Empty("calibration memory"))?;
    let w = T::one() / T::lit(indices.len() as f64);
    let mut out = ComplexMatrix::zeros(n, n);
    for &i in indices {
        out.add_outer(w, &memory.entries[i].label_eigvec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum AlphaRule {
    AdaptiveKappa,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub neighborhood_sizes: Vec<usize>,
    pub alpha_rule: AlphaRule,
    pub trace_normalize: bool,
    pub key_domain: KeyDomain,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            neighborhood_sizes: vec![5, 10, 20],
            alpha_rule: AlphaRule::AdaptiveKappa,
            trace_normalize: false,
            key_domain: KeyDomain::Db,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood_sizes.is_empty()
            || self.neighborhood_sizes.contains(&0)
            || self.neighborhood_sizes.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidParameter(format!(
                "neighbourhood sizes {:?} must be positive and ascending",
                self.neighborhood_sizes
            )));
        }
        if let AlphaRule::Fixed(a) = self.alpha_rule {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!("fixed alpha {a} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Weight of each ranked neighbour in the mean over scales of the
/// neighbourhood averages.
fn multiscale_weights<T: Real>(available: usize, sizes: &[usize]) -> Vec<T> {
    let longest = sizes.iter().map(|&s| s.min(available)).max().unwrap_or(0);
    let mut w = vec![T::zero(); longest];
    let per_scale = T::one() / T::lit(sizes.len() as f64);
    for &s in sizes {
        let s = s.min(available);
        let each = per_scale / T::lit(s as f64);
        for x in w.iter_mut().take(s) {
            *x = *x + each;
        }
    }
    w
}

fn memory_estimate<'a, T: Real + 'a>(
    query: &CalibrationKey<T>,
    keys: impl Iterator<Item = &'a CalibrationKey<T>>,
    label: impl Fn(usize) -> &'a [Cx<T>],
    sizes: &[usize],
) -> LowRankPsd<T> {
    let longest = sizes.iter().copied().max().unwrap_or(0);
    let ranked = rank_keys(query, keys, longest);
    let weights = multiscale_weights::<T>(ranked.len(), sizes);
    let mut acc = LowRankPsd::new();
    for ((i, _), w) in ranked.iter().zip(weights) {
        acc.push(w, label(*i).to_vec());
    }
    acc
}

fn memory_estimate_from<T: Real>(query: &CalibrationKey<T>, memory: &CalibrationMemory<T>, sizes: &[usize]) -> LowRankPsd<T> {
    memory_estimate(
        query,
        memory.entries.iter().map(|e| &e.key),
        |i| memory.entries[i].label_eigvec.as_slice(),
        sizes,
    )
}

/// Mean of the neighbourhood averages over all configured scales.
pub fn multiscale_average<T: Real>(query: &CalibrationKey<T>, memory: &CalibrationMemory<T>, cfg: &FusionConfig) -> Result<ComplexMatrix<T>> {
    let n = memory.n_t().ok_or(Error::Empty("calibration memory"))?;
    if cfg.neighborhood_sizes.is_empty() {
        return Err(Error::InvalidParameter("no neighbourhood sizes".into()));
    }
    if cfg.neighborhood_sizes.iter().any(|&s| s > memory.len()) {
        log::warn!("neighbourhood sizes {:?} clamped to memory size {}", cfg.neighborhood_sizes, memory.len());
    }
    Ok(memory_estimate_from(query, memory, &cfg.neighborhood_sizes).to_dense(n))
}

/// `(kappa, alpha)`: clipped nearest-neighbour cosine and the fusion weight.
pub fn confidence<T: Real>(query: &CalibrationKey<T>, memory: &CalibrationMemory<T>, rule: AlphaRule) -> (T, T) {
    if memory.is_empty() {
        return (T::zero(), T::zero());
    }
    let best = memory
        .entries
        .iter()
        .map(|e| query.cosine(&e.key))
        .fold(T::neg_infinity(), T::max);
    let kappa = best.max(T::zero()).min(T::one());
    let alpha = match rule {
        AlphaRule::AdaptiveKappa => kappa,
        AlphaRule::Fixed(a) => T::lit(a),
    };
    (kappa, alpha)
}

/// `(1 - alpha) P_par + alpha P_mem`, optionally after dividing each branch by
/// its trace.
pub fn fuse<T: Real>(p_par: &ComplexMatrix<T>, p_mem: &ComplexMatrix<T>, alpha: T, trace_normalize: bool) -> Result<ComplexMatrix<T>> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    if p_par.rows() != p_mem.rows() || p_par.cols() != p_mem.cols() {
        return Err(Error::DimensionMismatch("fusion branches differ in shape".into()));
    }
    let (sp, sm) = if trace_normalize {
        (T::one() / p_par.trace().re, T::one() / p_mem.trace().re)
    } else {
        (T::one(), T::one())
    };
    let mut out = p_par.scale((T::one() - alpha) * sp);
    out.add_scaled(alpha * sm, p_mem);
    Ok(out)
}

/// MSE-optimal memory weight `s_par / (s_par + s_mem)`.
pub fn optimal_alpha<T: Real>(sigma2_par: T, sigma2_mem: T) -> Result<T> {
    if !(sigma2_par >= T::zero() && sigma2_mem >= T::zero()) {
        return Err(Error::InvalidParameter("variances must be non-negative".into()));
    }
    let total = sigma2_par + sigma2_mem;
    if total == T::zero() {
        return Err(Error::InvalidParameter("both variances are zero".into()));
    }
    Ok(sigma2_par / total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition<T> {
    pub decision: SubspaceDecision<T>,
    pub kappa: T,
    pub alpha: T,
}

fn check_ids<T: Real>(fp: &RsrpFingerprint<T>, memory: &CalibrationMemory<T>, cfg: &FusionConfig) -> Result<()> {
    if fp.codebook_id != memory.codebook_id {
        return Err(Error::CodebookMismatch { expected: memory.codebook_id.clone(), found: fp.codebook_id.clone() });
    }
    if cfg.key_domain != memory.key_domain {
        return Err(Error::InvalidParameter("memory keys were built in another key domain".into()));
    }
    Ok(())
}

/// Retrieval, fusion with the parametric prediction and rank-`q` extraction.
/// Model parameters are never modified.
pub fn sifo_acquire<T: Real>(
    fp: &RsrpFingerprint<T>,
    model: &BeamScorerModel<T>,
    dictionary: &Codebook<T>,
    memory: &CalibrationMemory<T>,
    cfg: &FusionConfig,
    q: usize,
) -> Result<Acquisition<T>> {
    check_ids(fp, memory, cfg)?;
    let parametric = predict_subspace(fp, model, dictionary, q)?;
    if memory.is_empty() {
        return Ok(Acquisition { decision: parametric.with_scheme("sifo"), kappa: T::zero(), alpha: T::zero() });
    }
    let key = make_key(fp, cfg.key_domain)?;
    let (kappa, alpha) = confidence(&key, memory, cfg.alpha_rule);
    if alpha == T::zero() {
        return Ok(Acquisition { decision: parametric.with_scheme("sifo"), kappa, alpha });
    }
    let mem = memory_estimate_from(&key, memory, &cfg.neighborhood_sizes);
    let n = parametric.n_t();
    let (w_par, w_mem) = if cfg.trace_normalize {
        ((T::one() - alpha) / T::lit(q as f64), alpha / mem.trace())
    } else {
        (T::one() - alpha, alpha)
    };
    let mut mix = LowRankPsd::new();
    if w_par > T::zero() {
        for v in parametric.basis.columns() {
            mix.push(w_par, v);
        }
    }
    mix.extend_scaled(mem, w_mem);
    let decision = mix.dominant_subspace(n, q, "sifo")?;
    Ok(Acquisition { decision, kappa, alpha })
}

/// Memory-only rule: dominant rank-`q` eigenspace of the multi-scale average.
pub fn memory_only_acquire<T: Real>(fp: &RsrpFingerprint<T>, memory: &CalibrationMemory<T>, cfg: &FusionConfig, q: usize) -> Result<SubspaceDecision<T>> {
    check_ids(fp, memory, cfg)?;
    let n = memory.n_t().ok_or(Error::Empty("calibration memory"))?;
    let key = make_key(fp, cfg.key_domain)?;
    memory_estimate_from(&key, memory, &cfg.neighborhood_sizes).dominant_subspace(n, q, "memory_only")
}

/// Mean capture efficiency of the memory-only rule over validation queries.
pub fn memory_only_eta<T: Real>(
    memory_keys: &[CalibrationKey<T>],
    labels: &[Vec<Cx<T>>],
    query_keys: &[CalibrationKey<T>],
    query_channels: &[&[Cx<T>]],
    sizes: &[usize],
    q: usize,
) -> Result<f64> {
    if memory_keys.is_empty() || query_keys.is_empty() {
        return Err(Error::Empty("memory or queries"));
    }
    let n = labels[0].len();
    let mut total = 0.0;
    for (key, h) in query_keys.iter().zip(query_channels) {
        let d = memory_estimate(key, memory_keys.iter(), |i| labels[i].as_slice(), sizes).dominant_subspace(n, q, "memory_only")?;
        total += d.capture(h)?.as_f64();
    }
    Ok(total / query_keys.len() as f64)
}
