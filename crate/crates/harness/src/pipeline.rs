//! One replicate of the leave-one-site-out protocol: pretraining on the
//! source sites, target-site calibration data and per-UE scheme evaluation.

use std::time::Instant;

use rayon::prelude::*;
use sifo_core::baselines::{Baseline, BaselineConfig};
use sifo_core::calibration::{build_memory, memory_only_acquire, sifo_acquire, MeasurementConfig};
use sifo_core::parametric::{
    fine_tune, learn_probing_codebook, make_sample, predict_subspace, train_parametric, CodebookLearnConfig,
};
use sifo_core::probing::{dft_dictionary, gram_offdiag_energy, max_coherence, measure_rsrp};
use sifo_core::rng::derive_seed;
use sifo_core::subspace::effective_rate;
use sifo_core::{Channel, Codebook64, Decision, Fingerprint, Memory, Model, Sample};

use crate::config::{ExperimentConfig, SchemeKind};
use crate::data::{SitePool, TargetSplit};
use crate::{HarnessError, Result};

const CODEBOOK_STREAM: u64 = 0x6362;
const MODEL_STREAM: u64 = 0x6d6f;
const TRAIN_STREAM: u64 = 0x7472;
const TUNE_STREAM: u64 = 0x6674;
const MEASURE_STREAM: u64 = 0x6d73;
const SPLIT_STREAM: u64 = 0x7370;

/// Codebook-learning summary kept alongside the pretrained artifacts.
#[derive(Clone, Debug)]
pub struct CodebookSummary {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub accepted_moves: usize,
    pub gram_energy: f64,
    pub max_coherence: f64,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub codebook: Codebook64,
    pub dictionary: Codebook64,
    pub model: Model,
    pub codebook_summary: CodebookSummary,
}

pub fn measurement(cfg: &ExperimentConfig) -> MeasurementConfig {
    MeasurementConfig { tx_power_dbm: cfg.tx_power_dbm, noise_sigma_db: cfg.rsrp_noise_db }
}

/// Seed of the RSRP noise stream for one replicate.
pub fn measurement_seed(cfg: &ExperimentConfig, seed: u64) -> u64 {
    derive_seed(cfg.master_seed, &[MEASURE_STREAM, seed])
}

pub fn fingerprint(cfg: &ExperimentConfig, ch: &Channel, codebook: &Codebook64, seed: u64) -> Result<Fingerprint> {
    Ok(measure_rsrp(ch, codebook, cfg.tx_power_dbm, cfg.rsrp_noise_db, measurement_seed(cfg, seed))?)
}

pub fn samples_for(
    cfg: &ExperimentConfig,
    channels: &[&Channel],
    codebook: &Codebook64,
    dictionary: &Codebook64,
    seed: u64,
) -> Result<Vec<Sample>> {
    channels
        .par_iter()
        .map(|ch| Ok(make_sample(&fingerprint(cfg, ch, codebook, seed)?, ch, dictionary, cfg.q_rank)?))
        .collect()
}

/// Learns the probing codebook and trains the beam scorer on the source
/// sites. `fold` is the held-out site id.
pub fn pretrain(cfg: &ExperimentConfig, sources: &[&SitePool], fold: u32, seed: u64) -> Result<Pretrained> {
    let train: Vec<Channel> = sources
        .iter()
        .flat_map(|p| p.channels.iter().take(cfg.pretrain_ues_per_site).cloned())
        .collect();
    if train.is_empty() {
        return Err(HarnessError::Config("no source channels for pretraining".into()));
    }
    let labels = [u64::from(fold), seed];
    let cb_cfg = CodebookLearnConfig {
        rounds: cfg.codebook.rounds,
        candidates_per_beam: cfg.codebook.candidates_per_beam,
        memory_ues: cfg.codebook.memory_ues,
        validation_ues: cfg.codebook.validation_ues,
        neighborhood_sizes: cfg.fusion.neighborhood_sizes.clone(),
        key_domain: cfg.key_domain,
        tx_power_dbm: cfg.tx_power_dbm,
        noise_sigma_db: cfg.rsrp_noise_db,
        phase_jitter: cfg.codebook.phase_jitter,
        seed: derive_seed(cfg.master_seed, &[CODEBOOK_STREAM, labels[0], labels[1]]),
        ..CodebookLearnConfig::new(cfg.k_beams, cfg.q_rank)
    };
    let start = Instant::now();
    let report = learn_probing_codebook(&train, &cb_cfg)?;
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let codebook = report.codebook;
    let codebook_summary = CodebookSummary {
        initial_objective: report.initial_objective,
        final_objective: report.final_objective,
        accepted_moves: report.accepted_moves,
        gram_energy: gram_offdiag_energy(&codebook)?,
        max_coherence: max_coherence(&codebook),
        elapsed_ms,
    };
    log::info!(
        "fold {fold} seed {seed}: codebook objective {:.4} -> {:.4} ({} moves)",
        report.initial_objective,
        report.final_objective,
        report.accepted_moves
    );

    let dictionary = dft_dictionary::<f64>(cfg.n_t, cfg.dictionary_oversample)?;
    let refs: Vec<&Channel> = train.iter().collect();
    let samples = samples_for(cfg, &refs, &codebook, &dictionary, seed)?;
    let mut dims = vec![cfg.k_beams];
    dims.extend(&cfg.hidden_layers);
    dims.push(dictionary.k());
    let mut model = Model::new(
        &dims,
        dictionary.id(),
        codebook.id(),
        derive_seed(cfg.master_seed, &[MODEL_STREAM, labels[0], labels[1]]),
    )?;
    let train_cfg = sifo_core::parametric::TrainConfig {
        seed: derive_seed(cfg.train.seed, &[TRAIN_STREAM, labels[0], labels[1]]),
        ..cfg.train.clone()
    };
    let tr = train_parametric(&mut model, &samples, &train_cfg)?;
    log::info!("fold {fold} seed {seed}: probe loss {:.4} -> {:.4}", tr.probe_loss_initial, tr.probe_loss_final);
    Ok(Pretrained { codebook, dictionary, model, codebook_summary })
}

/// Per-UE outcome of one scheme at one budget.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub kind: SchemeKind,
    pub site: u32,
    pub seed: u64,
    pub budget: usize,
    pub etas: Vec<f64>,
    pub rates: Vec<f64>,
    /// Set when the scheme had no calibration data and fell back to the
    /// pretrained prediction.
    pub fallback: bool,
    pub wall_ms: u64,
}

/// Pretrained artifacts plus the held-out site's calibration and evaluation
/// data for one `(site, seed)` pair.
pub struct Replicate<'a> {
    pub cfg: &'a ExperimentConfig,
    pub target: &'a SitePool,
    pub seed: u64,
    pub pretrained: Pretrained,
    pub split: TargetSplit,
    pub eval_fingerprints: Vec<Fingerprint>,
    /// Memory over the whole calibration prefix; smaller budgets truncate it.
    pub full_memory: Memory,
    pub calibration_samples: Vec<Sample>,
}

impl<'a> Replicate<'a> {
    pub fn new(cfg: &'a ExperimentConfig, sites: &'a [SitePool], fold: usize, seed: u64) -> Result<Self> {
        let target = &sites[fold];
        let sources: Vec<&SitePool> = sites.iter().enumerate().filter(|(i, _)| *i != fold).map(|(_, p)| p).collect();
        let site = target.site_id();
        let pretrained = pretrain(cfg, &sources, site, seed)?;
        let split = TargetSplit::new(
            target.channels.len(),
            cfg.max_budget(),
            cfg.eval_ues,
            derive_seed(cfg.master_seed, &[SPLIT_STREAM, u64::from(site), seed]),
        )?;
        let overlap = split.overlap(target);
        if !overlap.is_empty() {
            return Err(HarnessError::Config(format!("calibration and evaluation share UEs {overlap:?}")));
        }
        let eval_fingerprints = split
            .evaluation
            .par_iter()
            .map(|&i| fingerprint(cfg, &target.channels[i], &pretrained.codebook, seed))
            .collect::<Result<Vec<_>>>()?;
        let cal: Vec<Channel> = split.calibration.iter().map(|&i| target.channels[i].clone()).collect();
        let full_memory = build_memory(
            site,
            &cal,
            &pretrained.codebook,
            &measurement(cfg),
            cfg.key_domain,
            measurement_seed(cfg, seed),
        )?;
        let cal_refs: Vec<&Channel> = cal.iter().collect();
        let calibration_samples = samples_for(cfg, &cal_refs, &pretrained.codebook, &pretrained.dictionary, seed)?;
        Ok(Self { cfg, target, seed, pretrained, split, eval_fingerprints, full_memory, calibration_samples })
    }

    pub fn site(&self) -> u32 {
        self.target.site_id()
    }

    pub fn eval_channels(&self) -> impl Iterator<Item = &Channel> {
        self.split.evaluation.iter().map(|&i| &self.target.channels[i])
    }

    pub fn calibration_ue_ids(&self) -> Vec<u64> {
        self.split.calibration.iter().map(|&i| self.target.channels[i].ue_id).collect()
    }

    pub fn evaluation_ue_ids(&self) -> Vec<u64> {
        self.eval_channels().map(|c| c.ue_id).collect()
    }

    pub fn memory(&self, budget: usize) -> Memory {
        let mut m = self.full_memory.clone();
        m.entries.truncate(budget);
        m
    }

    fn score<F>(&self, kind: SchemeKind, budget: usize, fallback: bool, decide: F) -> Result<Outcome>
    where
        F: Fn(usize, &Channel) -> sifo_core::Result<Decision> + Sync,
    {
        let start = Instant::now();
        let channels: Vec<&Channel> = self.eval_channels().collect();
        let etas = channels
            .par_iter()
            .enumerate()
            .map(|(i, ch)| Ok(decide(i, ch)?.capture(&ch.h)?.clamp(0.0, 1.0)))
            .collect::<sifo_core::Result<Vec<f64>>>()?;
        let overhead = self.cfg.overhead(kind);
        let rates = etas
            .iter()
            .map(|&e| effective_rate(e, self.cfg.rho_db, overhead, self.cfg.coherence_uses))
            .collect::<sifo_core::Result<Vec<f64>>>()?;
        Ok(Outcome {
            kind,
            site: self.site(),
            seed: self.seed,
            budget,
            etas,
            rates,
            fallback,
            wall_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Evaluates `kinds` at every budget. Fine-tuning runs once per budget
    /// and is shared by the fine-tuned schemes; baselines run once and are
    /// repeated across budgets.
    pub fn evaluate(&self, kinds: &[SchemeKind], budgets: &[usize]) -> Result<Vec<Outcome>> {
        let cfg = self.cfg;
        let pre = &self.pretrained;
        let fps = &self.eval_fingerprints;
        let q = cfg.q_rank;
        let mut out = Vec::new();

        for kind in kinds.iter().filter(|k| k.is_conventional()) {
            let bcfg = match kind {
                SchemeKind::ConvT2Dft => BaselineConfig::dft_select(q),
                _ => BaselineConfig { oversample: cfg.omp_oversample, ..BaselineConfig::dft_omp(q) },
            };
            let baseline = Baseline::<f64>::new(bcfg, cfg.n_t)?;
            let base = self.score(*kind, 0, false, |_, ch| baseline.decide(&ch.h))?;
            out.extend(budgets.iter().map(|&b| Outcome { budget: b, ..base.clone() }));
        }

        let pretrained_only = if kinds.contains(&SchemeKind::Pretrained) {
            Some(self.score(SchemeKind::Pretrained, 0, false, |i, _| {
                predict_subspace(&fps[i], &pre.model, &pre.dictionary, q)
            })?)
        } else {
            None
        };

        for &budget in budgets {
            let memory = self.memory(budget);
            let tuned = if budget > 0 && kinds.iter().any(|k| matches!(k, SchemeKind::FineTune | SchemeKind::FusionFineTune)) {
                let tune_cfg = sifo_core::parametric::TrainConfig {
                    seed: derive_seed(cfg.fine_tune.seed, &[TUNE_STREAM, u64::from(self.site()), self.seed, budget as u64]),
                    ..cfg.fine_tune.clone()
                };
                Some(fine_tune(&pre.model, &self.calibration_samples[..budget], &tune_cfg)?.0)
            } else {
                None
            };
            let tuned_model = tuned.as_ref().unwrap_or(&pre.model);

            for &kind in kinds {
                let outcome = match kind {
                    SchemeKind::ConvT2Dft | SchemeKind::ConvT2Omp => continue,
                    SchemeKind::Pretrained => Outcome { budget, ..pretrained_only.clone().expect("computed above") },
                    SchemeKind::Sifo => self.score(kind, budget, budget == 0, |i, _| {
                        Ok(sifo_acquire(&fps[i], &pre.model, &pre.dictionary, &memory, &cfg.fusion, q)?.decision)
                    })?,
                    SchemeKind::MemoryOnly if budget == 0 => {
                        log::warn!("memory-only at budget 0 falls back to the pretrained prediction");
                        self.score(kind, budget, true, |i, _| predict_subspace(&fps[i], &pre.model, &pre.dictionary, q))?
                    }
                    SchemeKind::MemoryOnly => {
                        self.score(kind, budget, false, |i, _| memory_only_acquire(&fps[i], &memory, &cfg.fusion, q))?
                    }
                    SchemeKind::FineTune => self.score(kind, budget, budget == 0, |i, _| {
                        predict_subspace(&fps[i], tuned_model, &pre.dictionary, q)
                    })?,
                    SchemeKind::FusionFineTune => self.score(kind, budget, budget == 0, |i, _| {
                        Ok(sifo_acquire(&fps[i], tuned_model, &pre.dictionary, &memory, &cfg.fusion, q)?.decision)
                    })?,
                };
                out.push(outcome);
            }
        }
        Ok(out)
    }

    /// Memory-only capture with keys measured through `codebook` and the
    /// same calibration labels as the main memory.
    pub fn evaluate_keys(&self, codebook: &Codebook64, budgets: &[usize]) -> Result<Vec<Vec<f64>>> {
        let cfg = self.cfg;
        let cal: Vec<Channel> = self.split.calibration.iter().map(|&i| self.target.channels[i].clone()).collect();
        let full = build_memory(self.site(), &cal, codebook, &measurement(cfg), cfg.key_domain, measurement_seed(cfg, self.seed))?;
        let channels: Vec<&Channel> = self.eval_channels().collect();
        let fps = channels
            .par_iter()
            .map(|ch| fingerprint(cfg, ch, codebook, self.seed))
            .collect::<Result<Vec<_>>>()?;
        budgets
            .iter()
            .map(|&b| {
                let mut memory = full.clone();
                memory.entries.truncate(b);
                channels
                    .par_iter()
                    .zip(&fps)
                    .map(|(ch, fp)| Ok(memory_only_acquire(fp, &memory, &cfg.fusion, cfg.q_rank)?.capture(&ch.h)?.clamp(0.0, 1.0)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    }
}
