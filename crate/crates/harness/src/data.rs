//! Synthetic site pools: one channel snapshot per UE, ids unique across sites.

use rayon::prelude::*;
use sifo_core::channel::{sample_site, sample_ue_channel, sample_ue_geometry, SitePropagationModel};
use sifo_core::rng::{derive_seed, rng_from};
use sifo_core::Channel;

use crate::config::ExperimentConfig;
use crate::Result;

const SITE_STREAM: u64 = 0x5173;
const GEOMETRY_STREAM: u64 = 0x6765;
const SNAPSHOT_STREAM: u64 = 0x736e;

#[derive(Clone, Debug)]
pub struct SitePool {
    pub model: SitePropagationModel,
    pub channels: Vec<Channel>,
}

impl SitePool {
    pub fn site_id(&self) -> u32 {
        self.model.site_id
    }
}

pub fn ue_id(site: u32, index: usize) -> u64 {
    u64::from(site) * 1_000_000 + index as u64
}

pub fn generate_site(cfg: &ExperimentConfig, site: u32) -> Result<SitePool> {
    let seed = derive_seed(cfg.master_seed, &[SITE_STREAM]);
    let model = sample_site(site, seed, &cfg.site_params)?;
    let channels = (0..cfg.ues_per_site)
        .into_par_iter()
        .map(|i| {
            let id = ue_id(site, i);
            let geom = sample_ue_geometry(&model, id, derive_seed(cfg.master_seed, &[GEOMETRY_STREAM, id]))?;
            sample_ue_channel(&geom, cfg.n_t, derive_seed(cfg.master_seed, &[SNAPSHOT_STREAM, id]))
        })
        .collect::<sifo_core::Result<Vec<_>>>()?;
    Ok(SitePool { model, channels })
}

pub fn generate_sites(cfg: &ExperimentConfig) -> Result<Vec<SitePool>> {
    (0..cfg.n_sites as u32).map(|s| generate_site(cfg, s)).collect()
}

/// Calibration prefix and evaluation set of a target pool for one replicate.
#[derive(Clone, Debug)]
pub struct TargetSplit {
    pub calibration: Vec<usize>,
    pub evaluation: Vec<usize>,
}

impl TargetSplit {
    pub fn new(pool_size: usize, calibration: usize, evaluation: usize, seed: u64) -> Result<Self> {
        if calibration + evaluation > pool_size {
            return Err(crate::HarnessError::Config(format!(
                "calibration {calibration} plus evaluation {evaluation} exceeds pool of {pool_size}"
            )));
        }
        let mut rng = rng_from(seed, &[0x73706c]);
        let order = rand::seq::index::sample(&mut rng, pool_size, calibration + evaluation).into_vec();
        let (cal, eval) = order.split_at(calibration);
        Ok(Self { calibration: cal.to_vec(), evaluation: eval.to_vec() })
    }

    /// UE ids shared by the two sets; always empty by construction.
    pub fn overlap(&self, pool: &SitePool) -> Vec<u64> {
        let cal: std::collections::BTreeSet<u64> = self.calibration.iter().map(|&i| pool.channels[i].ue_id).collect();
        self.evaluation.iter().map(|&i| pool.channels[i].ue_id).filter(|id| cal.contains(id)).collect()
    }
}
