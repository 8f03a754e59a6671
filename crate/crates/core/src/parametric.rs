//! Parametric branch: an MLP that scores an oversampled DFT dictionary from an
//! RSRP fingerprint, its pretraining and L2-SP fine-tuning, and the
//! gradient-free probing-codebook optimizer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::omp_indices;
use crate::calibration::{keys_from_rsrp, memory_only_eta};
use crate::channel::{steering_vector, UeChannel};
use crate::error::{Error, Result};
use crate::numerics::{norm, orthonormalize, ComplexMatrix};
use crate::probing::{
    dft_codebook, gram_offdiag_energy, max_coherence, BeamConstraint, Codebook, CodebookKind, KeyDomain,
    RsrpFingerprint, RSRP_FLOOR_DB,
};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::{cis, Cx, Real};
use crate::subspace::SubspaceDecision;

/// Relative RSRP feature: `(r - max r) / 20`, clamped below at `-5`.
pub fn fingerprint_features<T: Real>(values_db: &[T]) -> Vec<T> {
    let peak = values_db.iter().copied().fold(T::neg_infinity(), T::max);
    let scale = T::lit(20.0);
    let low = T::lit(-5.0);
    values_db.iter().map(|v| ((*v - peak) / scale).max(low)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs x outputs`.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    fn zeros_like(&self) -> Self {
        Self {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: vec![T::zero(); self.weights.len()],
            biases: vec![T::zero(); self.biases.len()],
        }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (j, &xj) in x.iter().enumerate() {
            if xj == T::zero() {
                continue;
            }
            let row = &self.weights[j * self.outputs..(j + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o = *o + xj * *w;
            }
        }
    }

    fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.biases.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub l2sp_coefficient: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 512,
            steps: 20_000,
            seed: 0,
            l2sp_coefficient: 1e-3,
        }
    }
}

impl TrainConfig {
    /// Reduced step count for desk-scale runs.
    pub fn desk() -> Self {
        Self { steps: 2000, batch_size: 128, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(self.l2sp_coefficient >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// `H_Theta`: fingerprint features to logits over a DFT dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BeamScorerModel<T> {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<DenseLayer<T>>,
    pub dictionary_id: String,
    pub codebook_id: String,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
}

impl<T: Real> BeamScorerModel<T> {
    /// Uniform weights in `[-1, 1] / sqrt(fan_in)`, zero biases.
    pub fn new(layer_dims: &[usize], dictionary_id: &str, codebook_id: &str, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("layer dims {layer_dims:?}")));
        }
        let mut rng = rng_from(seed, &[0x6d6c70]);
        let weights = layer_dims
            .windows(2)
            .map(|w| {
                let scale = 1.0 / (w[0] as f64).sqrt();
                DenseLayer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| T::lit(scale * rng.random_range(-1.0..1.0))).collect(),
                    biases: vec![T::zero(); w[1]],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            dictionary_id: dictionary_id.into(),
            codebook_id: codebook_id.into(),
            train_config: None,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two layers")
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() + 1 != self.layer_dims.len() {
            return Err(Error::DimensionMismatch("layer count".into()));
        }
        for (l, layer) in self.weights.iter().enumerate() {
            if layer.inputs != self.layer_dims[l]
                || layer.outputs != self.layer_dims[l + 1]
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::DimensionMismatch(format!("layer {l} does not chain")));
            }
        }
        if self.params().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().flat_map(DenseLayer::params)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().flat_map(DenseLayer::params_mut)
    }

    pub fn n_params(&self) -> usize {
        self.params().count()
    }

    /// Largest absolute parameter difference.
    pub fn max_param_diff(&self, other: &Self) -> T {
        self.params()
            .zip(other.params())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn scores(&self, features: &[T]) -> Result<Vec<T>> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "fingerprint has {} entries, model expects {}",
                features.len(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::new();
        self.forward(features, &mut acts);
        Ok(acts.pop().expect("output layer"))
    }

    fn forward(&self, x: &[T], acts: &mut Vec<Vec<T>>) {
        acts.resize_with(self.weights.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.weights.len() - 1;
        for (l, layer) in self.weights.iter().enumerate() {
            let (prev, next) = acts.split_at_mut(l + 1);
            layer.apply(&prev[l], &mut next[0]);
            if l != last {
                next[0].iter_mut().for_each(|z| *z = z.max(T::zero()));
            }
        }
    }

    /// Sigmoid cross-entropy of one sample against a multi-hot target,
    /// accumulating `scale * gradient` into `grads`.
    fn loss_and_backprop(
        &self,
        x: &[T],
        targets: &[usize],
        acts: &mut Vec<Vec<T>>,
        grads: Option<(&mut [DenseLayer<T>], T)>,
    ) -> T {
        self.forward(x, acts);
        let logits = &acts[self.weights.len()];
        let mut y = vec![T::zero(); logits.len()];
        for &t in targets {
            y[t] = T::one();
        }
        let mut loss = T::zero();
        let mut delta: Vec<T> = Vec::with_capacity(logits.len());
        for (z, yi) in logits.iter().zip(&y) {
            let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
            loss = loss + softplus - *yi * *z;
            delta.push(T::one() / (T::one() + (-*z).exp()) - *yi);
        }
        let Some((grads, scale)) = grads else {
            return loss;
        };
        delta.iter_mut().for_each(|d| *d = *d * scale);
        for l in (0..self.weights.len()).rev() {
            let layer = &self.weights[l];
            let g = &mut grads[l];
            let a = &acts[l];
            for (gb, d) in g.biases.iter_mut().zip(&delta) {
                *gb = *gb + *d;
            }
            for (j, &aj) in a.iter().enumerate() {
                if aj == T::zero() {
                    continue;
                }
                let row = &mut g.weights[j * layer.outputs..(j + 1) * layer.outputs];
                for (gw, d) in row.iter_mut().zip(&delta) {
                    *gw = *gw + aj * *d;
                }
            }
            if l > 0 {
                delta = a
                    .iter()
                    .enumerate()
                    .map(|(j, &aj)| {
                        if aj > T::zero() {
                            dot(&layer.weights[j * layer.outputs..(j + 1) * layer.outputs], &delta)
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
            }
        }
        loss
    }

    /// Mean loss and parameter gradient over a sample set.
    pub fn loss_and_gradient(&self, samples: &[TrainSample<T>]) -> Result<(T, Vec<T>)> {
        if samples.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        let mut grads: Vec<DenseLayer<T>> = self.weights.iter().map(DenseLayer::zeros_like).collect();
        let scale = T::one() / T::lit(samples.len() as f64);
        let mut acts = Vec::new();
        let mut total = T::zero();
        for s in samples {
            total = total + self.loss_and_backprop(&s.features, &s.targets, &mut acts, Some((&mut grads, scale)));
        }
        Ok((total * scale, grads.iter().flat_map(DenseLayer::params).copied().collect()))
    }

    /// Mean loss over a sample set.
    pub fn loss(&self, samples: &[TrainSample<T>]) -> Result<T> {
        if samples.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        let mut acts = Vec::new();
        let total: T = samples
            .iter()
            .map(|s| self.loss_and_backprop(&s.features, &s.targets, &mut acts, None))
            .sum();
        Ok(total / T::lit(samples.len() as f64))
    }

    /// Overwrites parameters from a flat vector in [`Self::params`] order.
    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch("parameter vector length".into()));
        }
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
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

/// One supervised example: fingerprint features and multi-hot target indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample<T> {
    pub features: Vec<T>,
    pub targets: Vec<usize>,
}

/// Greedy OMP-selected dictionary indices, ascending.
pub fn label_top_q<T: Real>(h: &UeChannel<T>, dictionary: &Codebook<T>, q: usize) -> Result<Vec<usize>> {
    let mut idx = omp_indices(&h.h, dictionary.beams(), q.min(dictionary.k()))?;
    idx.sort_unstable();
    Ok(idx)
}

pub fn make_sample<T: Real>(
    fp: &RsrpFingerprint<T>,
    h: &UeChannel<T>,
    dictionary: &Codebook<T>,
    q: usize,
) -> Result<TrainSample<T>> {
    Ok(TrainSample {
        features: fingerprint_features(&fp.values_db),
        targets: label_top_q(h, dictionary, q)?,
    })
}

/// `Q` highest-scoring dictionary columns, orthonormalized.
pub fn predict_subspace<T: Real>(
    fp: &RsrpFingerprint<T>,
    model: &BeamScorerModel<T>,
    dictionary: &Codebook<T>,
    q: usize,
) -> Result<SubspaceDecision<T>> {
    if fp.codebook_id != model.codebook_id {
        return Err(Error::CodebookMismatch { expected: model.codebook_id.clone(), found: fp.codebook_id.clone() });
    }
    if dictionary.id() != model.dictionary_id || dictionary.k() != model.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary {} ({} columns) does not match model output {} ({})",
            dictionary.id(),
            dictionary.k(),
            model.dictionary_id,
            model.output_dim()
        )));
    }
    if q == 0 || q > dictionary.n_t() {
        return Err(Error::InvalidParameter(format!("Q = {q}")));
    }
    let scores = model.scores(&fingerprint_features(&fp.values_db))?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("beam scores"));
    }
    let idx = top_indices(&scores, q);
    SubspaceDecision::from_columns(&dictionary.beams().select_columns(&idx), "pretrained")
}

/// Indices of the `q` largest values, lower index first on ties, ascending.
pub fn top_indices<T: Real>(values: &[T], q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order.truncate(q);
    order.sort_unstable();
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub probe_loss_initial: f64,
    pub probe_loss_final: f64,
    /// `(step, probe loss)` checkpoints.
    pub history: Vec<(usize, f64)>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    fn step(&mut self, params: &mut [T], grads: &[T], lr: T) {
        let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = params[i] - lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn probe_set<T: Real>(samples: &[TrainSample<T>], seed: u64) -> Vec<TrainSample<T>> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng_from(seed, &[0x70726f6265]));
    idx.truncate(512);
    idx.sort_unstable();
    idx.into_iter().map(|i| samples[i].clone()).collect()
}

fn run_adam<T: Real>(
    model: &mut BeamScorerModel<T>,
    samples: &[TrainSample<T>],
    cfg: &TrainConfig,
    anchor: Option<&[T]>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let probe = probe_set(samples, cfg.seed);
    let initial = model.loss(&probe)?.as_f64();
    let mut history = vec![(0, initial)];
    let mut rng = rng_from(cfg.seed, &[0x747261696e]);
    let mut params: Vec<T> = model.params().copied().collect();
    let mut adam = Adam::new(params.len());
    let lr = T::lit(cfg.learning_rate);
    let shrink = T::lit(2.0 * cfg.learning_rate * cfg.l2sp_coefficient);
    let checkpoint = (cfg.steps / 20).max(1);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 1..=cfg.steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            batch.push(samples[rng.random_range(0..samples.len())].clone());
        }
        let (loss, grads) = model.loss_and_gradient(&batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step, loss: loss.as_f64() });
        }
        adam.step(&mut params, &grads, lr);
        if let Some(theta0) = anchor {
            // proximal step for lambda * ||theta - theta0||^2
            for (p, p0) in params.iter_mut().zip(theta0) {
                *p = (*p + shrink * *p0) / (T::one() + shrink);
            }
        }
        model.set_params(&params)?;
        if step % checkpoint == 0 || step == cfg.steps {
            let l = model.loss(&probe)?.as_f64();
            if !l.is_finite() {
                return Err(Error::Divergence { step, loss: l });
            }
            history.push((step, l));
        }
    }
    let last = history.last().map(|h| h.1).unwrap_or(initial);
    Ok(TrainReport { probe_loss_initial: initial, probe_loss_final: last, history })
}

/// Mini-batch Adam on the multi-label cross-entropy.
pub fn train_parametric<T: Real>(
    model: &mut BeamScorerModel<T>,
    samples: &[TrainSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let report = run_adam(model, samples, cfg, None)?;
    model.train_config = Some(cfg.clone());
    Ok(report)
}

/// Continued training on target samples with an L2-SP pull toward the
/// starting parameters. The probing codebook is untouched.
pub fn fine_tune<T: Real>(
    model: &BeamScorerModel<T>,
    target: &[TrainSample<T>],
    cfg: &TrainConfig,
) -> Result<(BeamScorerModel<T>, TrainReport)> {
    if target.is_empty() {
        return Err(Error::Empty("fine-tuning set"));
    }
    let anchor: Vec<T> = model.params().copied().collect();
    let mut tuned = model.clone();
    let report = run_adam(&mut tuned, target, cfg, (cfg.l2sp_coefficient > 0.0).then_some(anchor.as_slice()))?;
    tuned.train_config = Some(cfg.clone());
    Ok((tuned, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookLearnConfig {
    pub k: usize,
    pub q: usize,
    pub rounds: usize,
    pub candidates_per_beam: usize,
    pub memory_ues: usize,
    pub validation_ues: usize,
    pub neighborhood_sizes: Vec<usize>,
    pub key_domain: KeyDomain,
    pub tx_power_dbm: f64,
    pub noise_sigma_db: f64,
    pub gram_energy_limit: f64,
    /// Standard deviation of per-element phase perturbations, radians.
    pub phase_jitter: f64,
    pub seed: u64,
}

impl CodebookLearnConfig {
    pub fn new(k: usize, q: usize) -> Self {
        Self {
            k,
            q,
            rounds: 2,
            candidates_per_beam: 4,
            memory_ues: 1000,
            validation_ues: 250,
            neighborhood_sizes: vec![5, 10, 20],
            key_domain: KeyDomain::Db,
            tx_power_dbm: 40.0,
            noise_sigma_db: 1.0,
            gram_energy_limit: 0.05,
            phase_jitter: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CodebookLearnReport<T> {
    pub codebook: Codebook<T>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub accepted_moves: usize,
    pub evaluated_candidates: usize,
    pub warnings: Vec<String>,
}

/// Phase-only DFT beams at the `k` strongest bins of the mean normalized
/// directional power of the training channels.
pub fn initial_probing_codebook<T: Real>(train: &[UeChannel<T>], k: usize) -> Result<Codebook<T>> {
    let n_t = train.first().ok_or(Error::Empty("training channels"))?.n_t();
    if k == 0 || k > n_t {
        return Err(Error::InvalidParameter(format!("K = {k} for N_t = {n_t}")));
    }
    let dft = dft_codebook::<T>(n_t);
    let mut stat = vec![0.0f64; n_t];
    for ch in train {
        let hn = norm(&ch.h).as_f64().powi(2);
        if hn == 0.0 {
            continue;
        }
        for (s, p) in stat.iter_mut().zip(dft.beam_powers(&ch.h)) {
            *s += p.as_f64() / hn;
        }
    }
    let bins = top_indices(&stat, k);
    let freqs: Vec<f64> = bins.iter().map(|&b| -(b as f64) / n_t as f64).collect();
    Codebook::steered(CodebookKind::Learned, n_t, &freqs)
}

struct ProbeProblem<'a, T> {
    channels: Vec<&'a UeChannel<T>>,
    noise: Vec<Vec<f64>>,
    n_memory: usize,
    labels: Vec<Vec<Cx<T>>>,
    offset: f64,
}

impl<T: Real> ProbeProblem<'_, T> {
    fn rsrp(&self, ue: usize, beam: &[Cx<T>], slot: usize) -> T {
        let p = crate::numerics::inner(beam, &self.channels[ue].h).norm_sqr().as_f64();
        let clean = (self.offset + 10.0 * p.log10()).max(RSRP_FLOOR_DB);
        T::lit(clean + self.noise[ue][slot])
    }

    fn objective(&self, rsrp: &[Vec<T>], cfg: &CodebookLearnConfig) -> Result<f64> {
        let keys = keys_from_rsrp(rsrp, cfg.key_domain)?;
        let (mem, val) = keys.split_at(self.n_memory);
        let hs: Vec<&[Cx<T>]> = self.channels[self.n_memory..].iter().map(|c| c.h.as_slice()).collect();
        memory_only_eta(mem, &self.labels[..self.n_memory], val, &hs, &cfg.neighborhood_sizes, cfg.q)
    }
}

/// Block-coordinate ascent over beams with random re-steer and phase-jitter
/// candidates, scored by the memory-only pipeline on a held-out split.
pub fn learn_probing_codebook<T: Real>(train: &[UeChannel<T>], cfg: &CodebookLearnConfig) -> Result<CodebookLearnReport<T>> {
    if train.len() < 2 {
        return Err(Error::Empty("codebook training channels"));
    }
    let n_t = train[0].n_t();
    let init = initial_probing_codebook(train, cfg.k)?;
    let mut rng = rng_from(cfg.seed, &[0x636231]);

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let n_val = cfg.validation_ues.min(train.len() / 4).max(1);
    let n_mem = cfg.memory_ues.min(train.len() - n_val).max(1);
    let chosen: Vec<usize> = order.into_iter().take(n_mem + n_val).collect();
    let channels: Vec<&UeChannel<T>> = chosen.iter().map(|&i| &train[i]).collect();
    let noise_dist = Normal::new(0.0, cfg.noise_sigma_db.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise: Vec<Vec<f64>> = channels
        .iter()
        .map(|c| {
            let mut r = rng_from(derive_seed(cfg.seed, &[c.ue_id, c.snapshot_seed]), &[0x6e6f]);
            (0..cfg.k).map(|_| if cfg.noise_sigma_db > 0.0 { noise_dist.sample(&mut r) } else { 0.0 }).collect()
        })
        .collect();
    let labels: Vec<Vec<Cx<T>>> = channels.iter().map(|c| c.direction()).collect();
    let problem = ProbeProblem { channels, noise, n_memory: n_mem, labels, offset: cfg.tx_power_dbm };

    let mut beams = init.beams().columns();
    let mut rsrp: Vec<Vec<T>> = (0..problem.channels.len())
        .map(|u| beams.iter().enumerate().map(|(k, b)| problem.rsrp(u, b, k)).collect())
        .collect();
    let initial = problem.objective(&rsrp, cfg)?;
    let mut best = initial;
    let mut accepted = 0;
    let mut evaluated = 0;
    let amp = T::lit(1.0 / (n_t as f64).sqrt());
    let jitter = Normal::new(0.0, cfg.phase_jitter.max(1e-12)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let fine = 4 * n_t;

    for _round in 0..cfg.rounds {
        for j in 0..cfg.k {
            for c in 0..cfg.candidates_per_beam {
                let candidate: Vec<Cx<T>> = if c % 2 == 0 {
                    let u = -(rng.random_range(0..fine) as f64) / fine as f64;
                    steering_vector(u, n_t)
                } else {
                    beams[j]
                        .iter()
                        .map(|z| cis(z.arg() + T::lit(jitter.sample(&mut rng))) * amp)
                        .collect()
                };
                let mut trial = beams.clone();
                trial[j] = candidate;
                let cb = Codebook::new(CodebookKind::Learned, BeamConstraint::PhaseOnly, ComplexMatrix::from_columns(&trial)?)?;
                if gram_offdiag_energy(&cb)?.as_f64() > cfg.gram_energy_limit || max_coherence(&cb).as_f64() >= 0.99 {
                    continue;
                }
                evaluated += 1;
                let old: Vec<T> = rsrp.iter().map(|r| r[j]).collect();
                for (u, r) in rsrp.iter_mut().enumerate() {
                    r[j] = problem.rsrp(u, &trial[j], j);
                }
                let score = problem.objective(&rsrp, cfg)?;
                if score > best + 1e-12 {
                    best = score;
                    beams = trial;
                    accepted += 1;
                } else {
                    for (r, o) in rsrp.iter_mut().zip(old) {
                        r[j] = o;
                    }
                }
            }
        }
    }

    let codebook = Codebook::new(CodebookKind::Learned, BeamConstraint::PhaseOnly, ComplexMatrix::from_columns(&beams)?)?;
    let mut warnings = Vec::new();
    if cfg.k >= 2 {
        let e = gram_offdiag_energy(&codebook)?.as_f64();
        if e > cfg.gram_energy_limit {
            let msg = format!("Gram off-diagonal energy {e:.4} exceeds {}", cfg.gram_energy_limit);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(CodebookLearnReport {
        codebook,
        initial_objective: initial,
        final_objective: best,
        accepted_moves: accepted,
        evaluated_candidates: evaluated,
        warnings,
    })
}

/// Spatial frequency on a `4 N_t` grid where the beam's array response peaks.
pub fn beam_pointing<T: Real>(beam: &[Cx<T>]) -> f64 {
    let n_t = beam.len();
    let fine = 4 * n_t;
    (0..fine)
        .map(|i| -(i as f64) / fine as f64)
        .map(|u| (u, crate::numerics::inner(&steering_vector::<T>(u, n_t), beam).norm_sqr().as_f64()))
        .fold((0.0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
        .0
}

/// Orthonormal basis of the dictionary columns in `idx` (for tests and tools).
pub fn dictionary_subspace<T: Real>(dictionary: &Codebook<T>, idx: &[usize], scheme: &str) -> Result<SubspaceDecision<T>> {
    Ok(SubspaceDecision::from_orthonormal(orthonormalize(&dictionary.beams().select_columns(idx))?, scheme))
}
