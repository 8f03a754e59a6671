//! The experiment protocols: LOCO budget sweeps, the adaptation and key
//! ablations, and the effective-rate sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sifo_core::probing::{dft_codebook, dft_sub_codebook, random_codebook, BeamConstraint};
use sifo_core::rng::derive_seed;
use sifo_core::subspace::effective_rate;

use crate::config::{ExperimentConfig, SchemeKind};
use crate::data::{generate_sites, SitePool};
use crate::metrics::{seed_average, MetricsRecord};
use crate::pipeline::{Outcome, Replicate};
use crate::{HarnessError, Result};

pub const LOCO_SCHEMES: [SchemeKind; 4] =
    [SchemeKind::ConvT2Dft, SchemeKind::ConvT2Omp, SchemeKind::Pretrained, SchemeKind::Sifo];

pub const ADAPTATION_SCHEMES: [SchemeKind; 5] = [
    SchemeKind::Pretrained,
    SchemeKind::MemoryOnly,
    SchemeKind::FineTune,
    SchemeKind::Sifo,
    SchemeKind::FusionFineTune,
];

pub const RATE_SCHEMES: [SchemeKind; 4] = LOCO_SCHEMES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    AdaptationMode,
    KeyCoordinates,
}

impl FromStr for Ablation {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptation_mode" => Ok(Self::AdaptationMode),
            "key_coordinates" => Ok(Self::KeyCoordinates),
            other => Err(HarnessError::Config(format!(
                "unknown ablation `{other}` (expected adaptation_mode or key_coordinates)"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AdaptationMode => "adaptation_mode",
            Self::KeyCoordinates => "key_coordinates",
        })
    }
}

/// Generated sites for one configuration; replicates borrow from it.
pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub sites: Vec<SitePool>,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let sites = generate_sites(&cfg)?;
        Ok(Self { cfg, sites })
    }

    /// Pretrains every `(held-out site, seed)` pair, in site-major order.
    pub fn replicates(&self) -> Result<Vec<Replicate<'_>>> {
        let mut reps = Vec::new();
        for fold in 0..self.sites.len() {
            for &seed in &self.cfg.seeds {
                log::info!("pretraining for held-out site {fold}, seed {seed}");
                reps.push(Replicate::new(&self.cfg, &self.sites, fold, seed)?);
            }
        }
        Ok(reps)
    }
}

/// The subset of `kinds` listed in the configuration's scheme table.
pub fn configured(cfg: &ExperimentConfig, kinds: &[SchemeKind]) -> Vec<SchemeKind> {
    kinds.iter().copied().filter(|k| cfg.scheme(*k).is_some()).collect()
}

/// Union of the schemes and budgets needed by the requested experiments,
/// evaluated once per replicate.
pub fn evaluate(reps: &[Replicate<'_>], kinds: &[SchemeKind], budgets: &[usize]) -> Result<Vec<Outcome>> {
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    let mut out = Vec::new();
    for rep in reps {
        out.extend(rep.evaluate(&kinds, &budgets)?);
    }
    Ok(out)
}

fn record(tag: &str, o: &Outcome, timing: bool) -> MetricsRecord {
    let mut r = MetricsRecord::from_samples(tag, o.site, o.budget, o.seed, &o.etas, &o.rates);
    if timing {
        r.wall_ms = o.wall_ms;
    }
    r
}

fn select<'a>(outcomes: &'a [Outcome], kinds: &'a [SchemeKind], budgets: &'a [usize]) -> impl Iterator<Item = &'a Outcome> {
    outcomes.iter().filter(move |o| kinds.contains(&o.kind) && budgets.contains(&o.budget))
}

pub fn loco_records(cfg: &ExperimentConfig, outcomes: &[Outcome], timing: bool) -> Vec<MetricsRecord> {
    select(outcomes, &LOCO_SCHEMES, &cfg.budgets).map(|o| record(o.kind.tag(), o, timing)).collect()
}

/// Scheme names of the adaptation ablation; fallbacks are tagged.
pub fn adaptation_tag(o: &Outcome) -> String {
    let base = match o.kind {
        SchemeKind::Sifo => "fusion",
        k => k.tag(),
    };
    if o.fallback && o.kind == SchemeKind::MemoryOnly {
        format!("{base}_fallback")
    } else {
        base.to_string()
    }
}

pub fn adaptation_records(cfg: &ExperimentConfig, outcomes: &[Outcome], timing: bool) -> Vec<MetricsRecord> {
    select(outcomes, &ADAPTATION_SCHEMES, &cfg.budgets).map(|o| record(&adaptation_tag(o), o, timing)).collect()
}

pub fn rate_records(cfg: &ExperimentConfig, outcomes: &[Outcome], timing: bool) -> Vec<MetricsRecord> {
    select(outcomes, &RATE_SCHEMES, &cfg.rate_budgets).map(|o| record(o.kind.tag(), o, timing)).collect()
}

pub const KEY_TAGS: [&str; 4] = ["keys_random_k", "keys_dft_k", "keys_learned_k", "keys_dft_nt"];

/// Memory-only capture with keys from a random, a DFT and the learned
/// `K`-beam codebook and from the full DFT codebook; labels are identical.
pub fn key_records(reps: &[Replicate<'_>], timing: bool) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for rep in reps {
        let cfg = rep.cfg;
        let codebooks = [
            random_codebook::<f64>(
                cfg.n_t,
                cfg.k_beams,
                derive_seed(cfg.master_seed, &[0x726b, u64::from(rep.site()), rep.seed]),
                BeamConstraint::PhaseOnly,
            )?,
            dft_sub_codebook::<f64>(cfg.n_t, cfg.k_beams)?,
            rep.pretrained.codebook.clone(),
            dft_codebook::<f64>(cfg.n_t),
        ];
        for (tag, cb) in KEY_TAGS.iter().zip(&codebooks) {
            let start = std::time::Instant::now();
            let per_budget = rep.evaluate_keys(cb, &cfg.budgets)?;
            let elapsed = start.elapsed().as_millis() as u64;
            for (&budget, etas) in cfg.budgets.iter().zip(per_budget) {
                let rates = etas
                    .iter()
                    .map(|&e| effective_rate(e, cfg.rho_db, cfg.overhead(SchemeKind::MemoryOnly), cfg.coherence_uses))
                    .collect::<sifo_core::Result<Vec<f64>>>()?;
                let mut r = MetricsRecord::from_samples(tag, rep.site(), budget, rep.seed, &etas, &rates);
                if timing {
                    r.wall_ms = elapsed;
                }
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Where SiFo's mean effective rate overtakes the oversampled Type-II
/// baseline, averaged over sites and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    /// `(budget, sifo rate, conv_t2_omp rate, conv_t2_dft rate)`.
    pub rows: Vec<(usize, f64, f64, f64)>,
    pub crossing_budget: Option<usize>,
    pub exceeds_at_zero: Option<bool>,
}

impl CrossingReport {
    pub fn from_records(records: &[MetricsRecord], budgets: &[usize]) -> Self {
        let avg = |scheme: &str, b: usize| seed_average(records, scheme, None, b, true).unwrap_or(f64::NAN);
        let rows: Vec<_> = budgets
            .iter()
            .map(|&b| (b, avg("sifo", b), avg("conv_t2_omp", b), avg("conv_t2_dft", b)))
            .collect();
        let crossing_budget = rows.iter().find(|r| r.1 > r.2).map(|r| r.0);
        let exceeds_at_zero = rows.iter().find(|r| r.0 == 0).map(|r| r.1 > r.2);
        Self { rows, crossing_budget, exceeds_at_zero }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("budget sifo_rate conv_t2_omp_rate conv_t2_dft_rate\n");
        for (b, a, o, d) in &self.rows {
            s.push_str(&format!("{b} {a:.6} {o:.6} {d:.6}\n"));
        }
        match self.crossing_budget {
            Some(b) => s.push_str(&format!("crossing: sifo exceeds conv_t2_omp from budget {b}\n")),
            None => s.push_str("crossing: none within the swept budgets\n"),
        }
        if let Some(z) = self.exceeds_at_zero {
            s.push_str(&format!("budget 0 exceeds conv_t2_omp: {z}\n"));
        }
        s
    }
}

pub fn run_loco(cfg: &ExperimentConfig, timing: bool) -> Result<Vec<MetricsRecord>> {
    let ws = Workspace::new(cfg.clone())?;
    let reps = ws.replicates()?;
    let outcomes = evaluate(&reps, &configured(cfg, &LOCO_SCHEMES), &cfg.budgets)?;
    Ok(loco_records(cfg, &outcomes, timing))
}

pub fn run_ablation(cfg: &ExperimentConfig, which: &str, timing: bool) -> Result<Vec<MetricsRecord>> {
    let which: Ablation = which.parse()?;
    let ws = Workspace::new(cfg.clone())?;
    let reps = ws.replicates()?;
    match which {
        Ablation::AdaptationMode => {
            let outcomes = evaluate(&reps, &configured(cfg, &ADAPTATION_SCHEMES), &cfg.budgets)?;
            Ok(adaptation_records(cfg, &outcomes, timing))
        }
        Ablation::KeyCoordinates => key_records(&reps, timing),
    }
}

pub fn run_effective_rate(cfg: &ExperimentConfig, timing: bool) -> Result<(Vec<MetricsRecord>, CrossingReport)> {
    let ws = Workspace::new(cfg.clone())?;
    let reps = ws.replicates()?;
    let outcomes = evaluate(&reps, &configured(cfg, &RATE_SCHEMES), &cfg.rate_budgets)?;
    let records = rate_records(cfg, &outcomes, timing);
    let report = CrossingReport::from_records(&records, &cfg.rate_budgets);
    Ok((records, report))
}

/// Every experiment from one set of pretrained replicates.
pub struct FullRun {
    pub loco: Vec<MetricsRecord>,
    pub adaptation: Vec<MetricsRecord>,
    pub keys: Vec<MetricsRecord>,
    pub rate: Vec<MetricsRecord>,
    pub crossing: CrossingReport,
    pub codebooks: Vec<(u32, u64, crate::pipeline::CodebookSummary)>,
}

pub fn run_all(cfg: &ExperimentConfig, timing: bool) -> Result<FullRun> {
    let ws = Workspace::new(cfg.clone())?;
    let reps = ws.replicates()?;
    let all: Vec<SchemeKind> = LOCO_SCHEMES.iter().chain(&ADAPTATION_SCHEMES).chain(&RATE_SCHEMES).copied().collect();
    let kinds = configured(cfg, &all);
    let budgets: Vec<usize> = cfg.budgets.iter().chain(&cfg.rate_budgets).copied().collect();
    let outcomes = evaluate(&reps, &kinds, &budgets)?;
    let rate = rate_records(cfg, &outcomes, timing);
    let crossing = CrossingReport::from_records(&rate, &cfg.rate_budgets);
    Ok(FullRun {
        loco: loco_records(cfg, &outcomes, timing),
        adaptation: adaptation_records(cfg, &outcomes, timing),
        keys: key_records(&reps, timing)?,
        rate,
        crossing,
        codebooks: reps.iter().map(|r| (r.site(), r.seed, r.pretrained.codebook_summary.clone())).collect(),
    })
}
