//! Synthetic multi-site geometric channel generator.
//!
//! A site is a mixture of angular clusters in spatial frequency
//! `u = d sin(phi) / lambda`. Each UE draws a few near-orthogonal paths from
//! those clusters plus a log-normal large-scale gain; each snapshot draws
//! Rician per-path gains around the UE's mean path powers.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inner, norm, ComplexMatrix};
use crate::rng::rng_from;
use crate::scalar::{cis, cx, Cx, Real};

/// Wrapped distance between spatial frequencies on the unit circle.
pub fn spatial_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn wrap(u: f64) -> f64 {
    (u + 0.5).rem_euclid(1.0) - 0.5
}

/// ULA steering vector `a(u)`, entry `n` equal to `exp(j 2 pi n u) / sqrt(n_t)`.
pub fn steering_vector<T: Real>(u: f64, n_t: usize) -> Vec<Cx<T>> {
    let amp = T::lit(1.0 / (n_t as f64).sqrt());
    (0..n_t)
        .map(|n| {
            // reduce the phase in f64 before narrowing so f32 keeps accuracy
            let turns = (n as f64 * u).rem_euclid(1.0);
            cis(T::lit(std::f64::consts::TAU * turns)) * amp
        })
        .collect()
}

/// Generation knobs for [`sample_site`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteParams {
    pub n_clusters: usize,
    /// Minimum wrapped distance between cluster centers.
    pub min_cluster_separation: f64,
    /// Centers are drawn uniformly from `[-center_extent, center_extent)`.
    pub center_extent: f64,
    /// Per-cluster spread is drawn uniformly from this interval.
    pub spread_range: (f64, f64),
    pub paths_per_ue: (usize, usize),
    /// Minimum path separation inside one UE (default `2 / n_t`).
    pub min_path_separation: f64,
    /// Shadowing log-variance in dB^2.
    pub shadowing_log_variance_db2: f64,
    pub path_loss_db: f64,
    /// Ratio of fixed to diffuse power in each path gain.
    pub rician_k: f64,
}

impl Default for SiteParams {
    fn default() -> Self {
        Self::for_array(64)
    }
}

impl SiteParams {
    pub fn for_array(n_t: usize) -> Self {
        Self {
            n_clusters: 4,
            min_cluster_separation: 0.12,
            center_extent: 0.45,
            spread_range: (0.01, 0.03),
            paths_per_ue: (2, 3),
            min_path_separation: 2.0 / n_t as f64,
            shadowing_log_variance_db2: 1.0,
            path_loss_db: 130.0,
            rician_k: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_clusters == 0 {
            return bad("n_clusters must be positive");
        }
        if !(self.center_extent > 0.0 && self.center_extent <= 0.5) {
            return bad("center_extent must lie in (0, 0.5]");
        }
        if !(self.spread_range.0 > 0.0 && self.spread_range.0 <= self.spread_range.1) {
            return bad("spread_range must be positive and ordered");
        }
        if self.paths_per_ue.0 == 0 || self.paths_per_ue.0 > self.paths_per_ue.1 {
            return bad("paths_per_ue must be a nonempty positive interval");
        }
        if !(self.min_path_separation >= 0.0 && self.min_cluster_separation >= 0.0) {
            return bad("separations must be nonnegative");
        }
        if !(self.shadowing_log_variance_db2 >= 0.0 && self.rician_k >= 0.0) {
            return bad("shadowing variance and Rician factor must be nonnegative");
        }
        Ok(())
    }
}

/// Angular power model of one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SitePropagationModel {
    pub site_id: u32,
    pub seed: u64,
    pub cluster_centers: Vec<f64>,
    pub cluster_spreads: Vec<f64>,
    pub cluster_power_fractions: Vec<f64>,
    pub paths_per_ue: (usize, usize),
    pub min_path_separation: f64,
    pub shadowing_log_variance_db2: f64,
    pub path_loss_db: f64,
    pub rician_k: f64,
}

impl SitePropagationModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.cluster_centers.len();
        if n == 0 || self.cluster_spreads.len() != n || self.cluster_power_fractions.len() != n {
            return Err(Error::InvalidParameter("cluster arrays must be nonempty and aligned".into()));
        }
        if self.cluster_centers.iter().any(|u| !(-0.5..0.5).contains(u)) {
            return Err(Error::InvalidParameter("cluster center outside [-0.5, 0.5)".into()));
        }
        if self.cluster_spreads.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("cluster spreads must be positive".into()));
        }
        let total: f64 = self.cluster_power_fractions.iter().sum();
        if self.cluster_power_fractions.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("power fractions must be nonnegative and sum to 1".into()));
        }
        if self.paths_per_ue.0 == 0 || self.paths_per_ue.0 > self.paths_per_ue.1 {
            return Err(Error::InvalidParameter("paths_per_ue must be a positive interval".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let site: Self = serde_json::from_str(s)?;
        site.validate()?;
        Ok(site)
    }
}

const MAX_PLACEMENT_RETRIES: usize = 10_000;

/// Draws a site model. Deterministic in `(seed, site_id, params)`.
pub fn sample_site(site_id: u32, seed: u64, params: &SiteParams) -> Result<SitePropagationModel> {
    params.validate()?;
    let span = 2.0 * params.center_extent;
    let k = params.n_clusters;
    // k points pairwise >= sep apart need k * sep of circumference, or
    // (k - 1) * sep of a segment shorter than the full circle.
    let needed = if span >= 1.0 { k as f64 } else { (k - 1) as f64 } * params.min_cluster_separation;
    if needed > span.min(1.0) + 1e-12 {
        return Err(Error::Infeasible(format!(
            "{k} clusters separated by {} do not fit in a span of {span}",
            params.min_cluster_separation
        )));
    }
    let mut rng = rng_from(seed, &[u64::from(site_id), 0x517e]);
    let mut centers: Vec<f64> = Vec::with_capacity(k);
    let (mut tries, mut restarts) = (0, 0);
    while centers.len() < k {
        tries += 1;
        if tries > MAX_PLACEMENT_RETRIES {
            // rejection sampling stalled on a bad prefix; start over
            restarts += 1;
            if restarts > 100 {
                return Err(Error::Infeasible("cluster placement retry cap exceeded".into()));
            }
            centers.clear();
            tries = 0;
            continue;
        }
        let u = wrap(-params.center_extent + span * rng.random::<f64>());
        if centers
            .iter()
            .all(|&c| spatial_distance(c, u) >= params.min_cluster_separation)
        {
            centers.push(u);
        }
    }
    let spreads = (0..k)
        .map(|_| params.spread_range.0 + (params.spread_range.1 - params.spread_range.0) * rng.random::<f64>())
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect::<Vec<f64>>();
    let total: f64 = raw.iter().sum();
    let mut fractions: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // absorb rounding so the fractions sum to one exactly
    let head: f64 = fractions[..k - 1].iter().sum();
    fractions[k - 1] = 1.0 - head;

    let site = SitePropagationModel {
        site_id,
        seed,
        cluster_centers: centers,
        cluster_spreads: spreads,
        cluster_power_fractions: fractions,
        paths_per_ue: params.paths_per_ue,
        min_path_separation: params.min_path_separation,
        shadowing_log_variance_db2: params.shadowing_log_variance_db2,
        path_loss_db: params.path_loss_db,
        rician_k: params.rician_k,
    };
    site.validate()?;
    Ok(site)
}

/// Per-UE path geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeGeometry {
    pub ue_id: u64,
    pub site_id: u32,
    pub path_spatial_frequencies: Vec<f64>,
    /// Relative mean path powers, summing to one.
    pub path_mean_powers: Vec<f64>,
    pub large_scale_gain: f64,
    pub rician_k: f64,
}

impl UeGeometry {
    pub fn n_paths(&self) -> usize {
        self.path_spatial_frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_spatial_frequencies.is_empty()
            || self.path_mean_powers.len() != self.path_spatial_frequencies.len()
        {
            return Err(Error::InvalidParameter("geometry needs at least one path".into()));
        }
        if !(self.large_scale_gain > 0.0 && self.large_scale_gain.is_finite()) {
            return Err(Error::InvalidParameter("large-scale gain must be positive".into()));
        }
        if self.path_mean_powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("path powers must be nonnegative".into()));
        }
        Ok(())
    }

    /// Smallest wrapped distance between two paths (infinite for one path).
    pub fn min_separation(&self) -> f64 {
        let u = &self.path_spatial_frequencies;
        let mut best = f64::INFINITY;
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                best = best.min(spatial_distance(u[i], u[j]));
            }
        }
        best
    }

    /// `||A^H A - I||_F` for the steering matrix of this UE's paths.
    pub fn steering_gram_deviation(&self, n_t: usize) -> f64 {
        let a: Vec<Vec<Cx<f64>>> = self
            .path_spatial_frequencies
            .iter()
            .map(|&u| steering_vector(u, n_t))
            .collect();
        let mut acc = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                let g = inner(&a[i], &a[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                acc += (g - cx(target, 0.0)).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

/// Draws one UE of `site`. Deterministic in `(site, ue_id, ue_seed)`.
pub fn sample_ue_geometry(site: &SitePropagationModel, ue_id: u64, ue_seed: u64) -> Result<UeGeometry> {
    site.validate()?;
    let mut rng = rng_from(ue_seed, &[u64::from(site.site_id), ue_id, 0x0e]);
    let (lo, hi) = site.paths_per_ue;
    let n_paths = rng.random_range(lo..=hi);
    let mut freqs: Vec<f64> = Vec::with_capacity(n_paths);
    let mut tries = 0;
    while freqs.len() < n_paths {
        tries += 1;
        if tries > MAX_PLACEMENT_RETRIES {
            return Err(Error::Infeasible(format!(
                "could not place {n_paths} paths {} apart",
                site.min_path_separation
            )));
        }
        let c = pick_weighted(&site.cluster_power_fractions, rng.random::<f64>());
        let z: f64 = rng.sample(StandardNormal);
        let u = wrap(site.cluster_centers[c] + site.cluster_spreads[c] * z);
        if freqs
            .iter()
            .all(|&f| spatial_distance(f, u) >= site.min_path_separation)
        {
            freqs.push(u);
        }
    }
    let raw: Vec<f64> = (0..n_paths).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let powers = raw.iter().map(|r| r / total).collect();
    let shadow_db = if site.shadowing_log_variance_db2 > 0.0 {
        Normal::new(0.0, site.shadowing_log_variance_db2.sqrt())
            .expect("finite std")
            .sample(&mut rng)
    } else {
        0.0
    };
    let geom = UeGeometry {
        ue_id,
        site_id: site.site_id,
        path_spatial_frequencies: freqs,
        path_mean_powers: powers,
        large_scale_gain: 10f64.powf((-site.path_loss_db + shadow_db) / 10.0),
        rician_k: site.rician_k,
    };
    geom.validate()?;
    Ok(geom)
}

fn pick_weighted(weights: &[f64], x: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if x < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// One channel snapshot of a UE.
#[derive(Clone, Debug, PartialEq)]
pub struct UeChannel<T> {
    pub ue_id: u64,
    pub h: Vec<Cx<T>>,
    pub snapshot_seed: u64,
}

impl<T: Real> UeChannel<T> {
    pub fn new(ue_id: u64, h: Vec<Cx<T>>, snapshot_seed: u64) -> Result<Self> {
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("channel vector"));
        }
        if norm(&h) == T::zero() {
            return Err(Error::ZeroChannel);
        }
        Ok(Self { ue_id, h, snapshot_seed })
    }

    pub fn n_t(&self) -> usize {
        self.h.len()
    }

    /// `h / ||h||`.
    pub fn direction(&self) -> Vec<Cx<T>> {
        let n = norm(&self.h);
        self.h.iter().map(|z| z / n).collect()
    }

    pub fn scaled(&self, factor: Cx<T>) -> Result<Self> {
        Self::new(self.ue_id, self.h.iter().map(|z| z * factor).collect(), self.snapshot_seed)
    }
}

/// `h = sqrt(gain) * sum_l alpha_l a(u_l)` with
/// `alpha_l = sigma_l (sqrt(K/(K+1)) e^{j theta} + sqrt(1/(K+1)) CN(0,1))`,
/// so `E|alpha_l|^2 = sigma_l^2`.
pub fn sample_ue_channel<T: Real>(geom: &UeGeometry, n_t: usize, snapshot_seed: u64) -> Result<UeChannel<T>> {
    geom.validate()?;
    let mut rng = rng_from(snapshot_seed, &[u64::from(geom.site_id), geom.ue_id, 0xc4]);
    let k = geom.rician_k;
    let los = (k / (k + 1.0)).sqrt();
    let diffuse = (1.0 / (k + 1.0)).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    let amp = geom.large_scale_gain.sqrt();
    let mut h = vec![Cx::<f64>::new(0.0, 0.0); n_t];
    for (&u, &p) in geom.path_spatial_frequencies.iter().zip(&geom.path_mean_powers) {
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let alpha = (cis(theta) * los + cx(re, im) * diffuse) * (p.sqrt() * amp);
        for (hn, an) in h.iter_mut().zip(steering_vector::<f64>(u, n_t)) {
            *hn += alpha * an;
        }
    }
    UeChannel::new(
        geom.ue_id,
        h.into_iter().map(|z| cx(T::lit(z.re), T::lit(z.im))).collect(),
        snapshot_seed,
    )
}

/// Closed-form `sum_l p_l a(u_l) a(u_l)^H / sum_l p_l`, trace one.
pub fn ue_normalized_covariance<T: Real>(geom: &UeGeometry, n_t: usize) -> ComplexMatrix<T> {
    let total: f64 = geom.path_mean_powers.iter().sum();
    let mut r = ComplexMatrix::zeros(n_t, n_t);
    for (&u, &p) in geom.path_spatial_frequencies.iter().zip(&geom.path_mean_powers) {
        r.add_outer(T::lit(p / total), &steering_vector(u, n_t));
    }
    let tr = r.trace().re;
    r.scale(tr.recip())
}

/// Mean of normalized UE covariances over a UE population, i.e. the
/// gain-free site-level covariance.
pub fn site_covariance<T: Real>(geoms: &[UeGeometry], n_t: usize) -> Result<ComplexMatrix<T>> {
    if geoms.is_empty() {
        return Err(Error::Empty("UE population"));
    }
    let mut r = ComplexMatrix::zeros(n_t, n_t);
    let w = T::lit(1.0 / geoms.len() as f64);
    for g in geoms {
        r.add_scaled(w, &ue_normalized_covariance(g, n_t));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hermitian_eig, norm_sqr};

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector::<f64>(0.0, 4);
        assert!(a.iter().all(|z| (z - cx(0.5, 0.0)).norm() < 1e-15));
        for u in [0.013, -0.31, 0.49] {
            assert!((norm(&steering_vector::<f64>(u, 37)) - 1.0).abs() < 1e-14);
        }
        let n = 16;
        let g = inner(&steering_vector::<f64>(0.0, n), &steering_vector::<f64>(1.0 / n as f64, n));
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn site_sampling_is_deterministic_and_separated() {
        let p = SiteParams {
            n_clusters: 3,
            min_cluster_separation: 0.15,
            ..SiteParams::for_array(32)
        };
        let a = sample_site(1, 99, &p).unwrap();
        assert_eq!(a, sample_site(1, 99, &p).unwrap());
        assert_eq!(a.cluster_centers.len(), 3);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(spatial_distance(a.cluster_centers[i], a.cluster_centers[j]) >= 0.15);
            }
        }
        assert!((a.cluster_power_fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn impossible_cluster_spacing_is_rejected() {
        let p = SiteParams {
            n_clusters: 10,
            min_cluster_separation: 0.2,
            center_extent: 0.5,
            ..SiteParams::default()
        };
        assert!(matches!(sample_site(0, 1, &p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn site_json_round_trip() {
        let site = sample_site(3, 5, &SiteParams::default()).unwrap();
        let back = SitePropagationModel::from_json(&site.to_json().unwrap()).unwrap();
        assert_eq!(site, back);
    }

    fn single_cluster_site(paths: (usize, usize)) -> SitePropagationModel {
        SitePropagationModel {
            site_id: 0,
            seed: 0,
            cluster_centers: vec![0.1],
            cluster_spreads: vec![0.02],
            cluster_power_fractions: vec![1.0],
            paths_per_ue: paths,
            min_path_separation: 1.0 / 64.0,
            shadowing_log_variance_db2: 1.0,
            path_loss_db: 0.0,
            rician_k: 30.0,
        }
    }

    #[test]
    fn single_path_stays_near_cluster() {
        let site = single_cluster_site((1, 1));
        let inside = (0..10_000)
            .filter(|&i| {
                let g = sample_ue_geometry(&site, i, 17).unwrap();
                spatial_distance(g.path_spatial_frequencies[0], 0.1) <= 3.0 * 0.02
            })
            .count();
        assert!(inside as f64 / 1e4 >= 0.99, "{inside}");
    }

    #[test]
    fn geometry_is_deterministic_and_respects_path_count() {
        let site = single_cluster_site((2, 2));
        let g = sample_ue_geometry(&site, 4, 8).unwrap();
        assert_eq!(g, sample_ue_geometry(&site, 4, 8).unwrap());
        assert_eq!(g.n_paths(), 2);
        assert!(g.min_separation() >= site.min_path_separation);
    }

    fn fixed_geometry(freqs: Vec<f64>, powers: Vec<f64>, gain: f64) -> UeGeometry {
        UeGeometry {
            ue_id: 0,
            site_id: 0,
            path_spatial_frequencies: freqs,
            path_mean_powers: powers,
            large_scale_gain: gain,
            rician_k: 30.0,
        }
    }

    #[test]
    fn channel_power_matches_mean_path_power() {
        let n_t = 16;
        for g in [
            fixed_geometry(vec![0.2], vec![1.0], 1.0),
            fixed_geometry(vec![0.0, 4.0 / 16.0], vec![0.5, 0.5], 1.0),
        ] {
            let mean: f64 = (0..10_000)
                .map(|s| norm_sqr(&sample_ue_channel::<f64>(&g, n_t, s).unwrap().h))
                .sum::<f64>()
                / 1e4;
            assert!((mean - 1.0).abs() <= 0.02, "{mean}");
        }
    }

    #[test]
    fn zero_gain_is_rejected() {
        let g = fixed_geometry(vec![0.2], vec![1.0], 0.0);
        assert!(sample_ue_channel::<f64>(&g, 8, 1).is_err());
    }

    #[test]
    fn covariance_examples() {
        let n_t = 16;
        let g = fixed_geometry(vec![0.3], vec![1.0], 1.0);
        let r = ue_normalized_covariance::<f64>(&g, n_t);
        let eig = hermitian_eig(&r).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-12 && eig.eigenvalues[1].abs() < 1e-12);

        let g = fixed_geometry(vec![0.0, 3.0 / 16.0], vec![0.3, 0.3], 1.0);
        let eig = hermitian_eig(&ue_normalized_covariance::<f64>(&g, n_t)).unwrap();
        assert!((eig.eigenvalues[0] - 0.5).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 0.5).abs() < 1e-12);
        assert!(eig.eigenvalues[2].abs() < 1e-12);
    }

    #[test]
    fn direction_average_approaches_normalized_covariance() {
        let n_t = 16;
        let g = fixed_geometry(vec![-0.21, 0.05, 0.33], vec![0.5, 0.3, 0.2], 1e-9);
        let n = 20_000;
        let mut acc = ComplexMatrix::<f64>::zeros(n_t, n_t);
        for s in 0..n {
            let ch = sample_ue_channel::<f64>(&g, n_t, s).unwrap();
            acc.add_outer(1.0 / n as f64, &ch.direction());
        }
        let err = (&acc - &ue_normalized_covariance(&g, n_t)).frobenius_norm();
        assert!(err <= 0.03, "{err}");
    }

    #[test]
    fn site_covariance_directional_power_two_ways() {
        let site = sample_site(0, 3, &SiteParams::for_array(16)).unwrap();
        let geoms: Vec<_> = (0..50).map(|i| sample_ue_geometry(&site, i, 1).unwrap()).collect();
        let r = site_covariance::<f64>(&geoms, 16).unwrap();
        let eig = hermitian_eig(&r).unwrap();
        assert!(eig.min_eigenvalue() >= -1e-12);
        let s = steering_vector::<f64>(0.07, 16);
        let quad = inner(&s, &r.mat_vec(&s)).re;
        let per_ue: f64 = geoms
            .iter()
            .map(|g| inner(&s, &ue_normalized_covariance::<f64>(g, 16).mat_vec(&s)).re)
            .sum::<f64>()
            / 50.0;
        assert!((quad - per_ue).abs() < 1e-10);
    }
}
