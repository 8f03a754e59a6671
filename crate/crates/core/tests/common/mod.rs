#![allow(dead_code)]

use sifo_core::channel::{sample_site, sample_ue_channel, sample_ue_geometry, SiteParams, UeGeometry};
use sifo_core::numerics::ComplexMatrix;
use sifo_core::rng::{derive_seed, rng_from};
use sifo_core::{Channel, Complex64, Matrix};

use rand::Rng;
use rand_distr::StandardNormal;

pub fn site_channels(n_t: usize, clusters: usize, n_ues: usize, seed: u64) -> (Vec<UeGeometry>, Vec<Channel>) {
    let mut params = SiteParams { n_clusters: clusters, ..SiteParams::for_array(n_t) };
    if clusters == 1 {
        // one cluster must be wide enough to hold resolvable paths
        params.spread_range = (1.5 / n_t as f64, 2.0 / n_t as f64);
    }
    let site = sample_site(0, seed, &params).unwrap();
    let geoms: Vec<UeGeometry> = (0..n_ues as u64)
        .map(|i| sample_ue_geometry(&site, i, derive_seed(seed, &[1, i])).unwrap())
        .collect();
    let chans = geoms
        .iter()
        .map(|g| sample_ue_channel(g, n_t, derive_seed(seed, &[2, g.ue_id])).unwrap())
        .collect();
    (geoms, chans)
}

pub fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Random PSD matrix `G G^H / tr` with `G` of size `n x r`.
pub fn random_psd(n: usize, r: usize, seed: u64) -> Matrix {
    let mut rng = rng_from(seed, &[0x707364]);
    let mut a = ComplexMatrix::zeros(n, n);
    for _ in 0..r {
        a.add_outer(1.0, &random_vec(n, &mut rng));
    }
    let t = a.trace().re;
    a.scale(1.0 / t)
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> Matrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&g + &g.adjoint()).scale(0.5)
}
