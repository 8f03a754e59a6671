//! Experiment configuration: TOML or JSON, with desk and tiny profiles.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sifo_core::calibration::FusionConfig;
use sifo_core::channel::SiteParams;
use sifo_core::parametric::TrainConfig;
use sifo_core::probing::KeyDomain;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ConvT2Dft,
    ConvT2Omp,
    Pretrained,
    Sifo,
    MemoryOnly,
    FineTune,
    FusionFineTune,
}

impl SchemeKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::ConvT2Dft => "conv_t2_dft",
            Self::ConvT2Omp => "conv_t2_omp",
            Self::Pretrained => "pretrained",
            Self::Sifo => "sifo",
            Self::MemoryOnly => "memory_only",
            Self::FineTune => "fine_tune",
            Self::FusionFineTune => "fusion_fine_tune",
        }
    }

    pub fn is_conventional(self) -> bool {
        matches!(self, Self::ConvT2Dft | Self::ConvT2Omp)
    }
}

/// Channel uses spent on acquisition by one scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub ssb_uses: u32,
    #[serde(default)]
    pub rsrp_report_uses: u32,
    #[serde(default)]
    pub csirs_uses: u32,
    #[serde(default)]
    pub feedback_uses: u32,
}

impl SchemeSpec {
    /// Default accounting: Type-II pays SSB, CSI-RS and feedback; RSRP-based
    /// schemes pay SSB and one RSRP report.
    pub fn with_default_overhead(kind: SchemeKind, k: usize, n_t: usize) -> Self {
        if kind.is_conventional() {
            Self { kind, ssb_uses: k as u32, rsrp_report_uses: 0, csirs_uses: n_t as u32, feedback_uses: 8 }
        } else {
            Self { kind, ssb_uses: k as u32, rsrp_report_uses: 1, csirs_uses: 0, feedback_uses: 0 }
        }
    }

    pub fn overhead_uses(&self) -> u32 {
        self.ssb_uses + self.rsrp_report_uses + self.csirs_uses + self.feedback_uses
    }
}

/// Sites with narrow clusters: each dominant direction stays within a
/// fraction of a beamwidth, so same-site UEs share resolvable paths.
pub fn site_params(n_t: usize) -> SiteParams {
    let bin = 1.0 / n_t as f64;
    SiteParams { spread_range: (0.125 * bin, 0.375 * bin), ..SiteParams::for_array(n_t) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookSettings {
    pub rounds: usize,
    pub candidates_per_beam: usize,
    pub memory_ues: usize,
    pub validation_ues: usize,
    pub phase_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_sites: usize,
    pub ues_per_site: usize,
    /// Held-out evaluation UEs per target site.
    pub eval_ues: usize,
    /// Source UEs per site used for pretraining.
    pub pretrain_ues_per_site: usize,
    pub n_t: usize,
    pub k_beams: usize,
    pub q_rank: usize,
    pub site_params: SiteParams,
    pub dictionary_oversample: usize,
    pub omp_oversample: usize,
    pub tx_power_dbm: f64,
    pub rsrp_noise_db: f64,
    pub rho_db: f64,
    pub coherence_uses: u32,
    pub schemes: Vec<SchemeSpec>,
    pub budgets: Vec<usize>,
    /// Budgets of the effective-rate sweep; may include 0.
    pub rate_budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub key_domain: KeyDomain,
    pub fusion: FusionConfig,
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub fine_tune: TrainConfig,
    pub codebook: CodebookSettings,
}

impl ExperimentConfig {
    fn with_schemes(mut self) -> Self {
        use SchemeKind::*;
        self.schemes = [ConvT2Dft, ConvT2Omp, Pretrained, Sifo, MemoryOnly, FineTune, FusionFineTune]
            .into_iter()
            .map(|k| SchemeSpec::with_default_overhead(k, self.k_beams, self.n_t))
            .collect();
        self
    }

    /// Desk scale: 4 sites x 2500 UEs, N_t = 64, K = 16, Q = 4.
    pub fn desk() -> Self {
        let n_t = 64;
        let key_domain = KeyDomain::Db;
        Self {
            master_seed: 7,
            n_sites: 4,
            ues_per_site: 2500,
            eval_ues: 600,
            pretrain_ues_per_site: 2000,
            n_t,
            k_beams: 16,
            q_rank: 4,
            site_params: site_params(n_t),
            dictionary_oversample: 2,
            omp_oversample: 4,
            tx_power_dbm: 40.0,
            rsrp_noise_db: 1.0,
            rho_db: 10.0,
            coherence_uses: 1024,
            schemes: Vec::new(),
            budgets: vec![50, 200, 800],
            rate_budgets: vec![0, 50, 200, 800],
            seeds: vec![1, 2],
            key_domain,
            fusion: FusionConfig { key_domain, ..FusionConfig::default() },
            hidden_layers: vec![128, 128],
            train: TrainConfig { steps: 1500, batch_size: 64, ..TrainConfig::default() },
            fine_tune: TrainConfig { steps: 300, batch_size: 64, ..TrainConfig::default() },
            codebook: CodebookSettings {
                rounds: 1,
                candidates_per_beam: 4,
                memory_ues: 800,
                validation_ues: 200,
                phase_jitter: 0.3,
            },
        }
        .with_schemes()
    }

    /// CI scale: N_t = 16, K = 8, 2 sites.
    pub fn tiny() -> Self {
        let n_t = 16;
        let base = Self::desk();
        Self {
            n_sites: 2,
            ues_per_site: 400,
            eval_ues: 100,
            pretrain_ues_per_site: 400,
            n_t,
            k_beams: 8,
            site_params: site_params(n_t),
            budgets: vec![25, 100],
            rate_budgets: vec![0, 25, 100],
            seeds: vec![1],
            hidden_layers: vec![32, 32],
            train: TrainConfig { steps: 200, batch_size: 32, ..TrainConfig::default() },
            fine_tune: TrainConfig { steps: 50, batch_size: 32, ..TrainConfig::default() },
            codebook: CodebookSettings {
                rounds: 1,
                candidates_per_beam: 2,
                memory_ues: 200,
                validation_ues: 60,
                phase_jitter: 0.3,
            },
            ..base
        }
        .with_schemes()
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is TOML-representable")
    }

    pub fn scheme(&self, kind: SchemeKind) -> Option<&SchemeSpec> {
        self.schemes.iter().find(|s| s.kind == kind)
    }

    pub fn overhead(&self, kind: SchemeKind) -> u32 {
        self.scheme(kind)
            .cloned()
            .unwrap_or_else(|| SchemeSpec::with_default_overhead(kind, self.k_beams, self.n_t))
            .overhead_uses()
    }

    pub fn max_budget(&self) -> usize {
        self.budgets.iter().chain(&self.rate_budgets).copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_sites < 2 {
            return bad("leave-one-site-out needs n_sites >= 2".into());
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("budgets must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.max_budget() + self.eval_ues > self.ues_per_site {
            return bad(format!(
                "largest budget {} plus {} evaluation UEs exceeds the {} UEs of a site",
                self.max_budget(),
                self.eval_ues,
                self.ues_per_site
            ));
        }
        if self.eval_ues == 0 || self.pretrain_ues_per_site == 0 {
            return bad("evaluation and pretraining sets must be nonempty".into());
        }
        if self.k_beams == 0 || self.k_beams > self.n_t || self.q_rank == 0 || self.q_rank > self.n_t {
            return bad(format!("K = {} and Q = {} must lie in 1..=N_t = {}", self.k_beams, self.q_rank, self.n_t));
        }
        if self.dictionary_oversample == 0 || self.omp_oversample == 0 {
            return bad("oversample factors must be >= 1".into());
        }
        for s in &self.schemes {
            if s.overhead_uses() > self.coherence_uses {
                return bad(format!(
                    "{} overhead {} exceeds coherence interval {}",
                    s.kind.tag(),
                    s.overhead_uses(),
                    self.coherence_uses
                ));
            }
        }
        if self.fusion.key_domain != self.key_domain {
            return bad("fusion.key_domain must equal key_domain".into());
        }
        self.fusion.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.site_params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.fine_tune.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
