//! SSB probing codebooks, the RSRP measurement operator, calibration keys and
//! the sensing-design diagnostics (worst-case sensing energy, Gram
//! off-diagonal energy, directional-power statistics).

use std::fmt;

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, UeChannel};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, inner, norm, ComplexMatrix};
use crate::rng::{fnv1a, rng_from};
use crate::scalar::{cis, Cx, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    DftFull,
    DftSub,
    DftOversampled,
    Random,
    Learned,
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::DftFull => "dft_full",
            CodebookKind::DftSub => "dft_sub",
            CodebookKind::DftOversampled => "dft_oversampled",
            CodebookKind::Random => "random",
            CodebookKind::Learned => "learned",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamConstraint {
    Unconstrained,
    PhaseOnly,
}

/// `N_t x K` matrix of unit-norm beams.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook<T> {
    id: String,
    kind: CodebookKind,
    constraint: BeamConstraint,
    beams: ComplexMatrix<T>,
}

impl<T: Real> Codebook<T> {
    /// Validates unit-norm columns (and constant modulus for phase-only
    /// codebooks) and assigns a content-derived id.
    pub fn new(kind: CodebookKind, constraint: BeamConstraint, beams: ComplexMatrix<T>) -> Result<Self> {
        if beams.cols() == 0 || beams.rows() == 0 {
            return Err(Error::Empty("codebook beams"));
        }
        if !beams.is_finite() {
            return Err(Error::NonFinite("codebook entries"));
        }
        let tol = T::lit(T::CHECK_TOL);
        for j in 0..beams.cols() {
            if (norm(&beams.column(j)) - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("beam {j} is not unit norm")));
            }
        }
        if constraint == BeamConstraint::PhaseOnly {
            let modulus = T::lit(1.0 / (beams.rows() as f64).sqrt());
            if beams.as_slice().iter().any(|z| (z.norm() - modulus).abs() > tol) {
                return Err(Error::InvalidParameter("phase-only beam with non-constant modulus".into()));
            }
        }
        let hash = fnv1a(
            beams
                .as_slice()
                .iter()
                .flat_map(|z| [z.re.as_f64().to_bits(), z.im.as_f64().to_bits()])
                .flat_map(u64::to_le_bytes),
        );
        let id = format!("{kind}-{}x{}-{hash:016x}", beams.rows(), beams.cols());
        Ok(Self {
            id,
            kind,
            constraint,
            beams,
        })
    }

    /// Phase-only beams steered at the given spatial frequencies.
    pub fn steered(kind: CodebookKind, n_t: usize, freqs: &[f64]) -> Result<Self> {
        let cols: Vec<_> = freqs.iter().map(|&u| steering_vector(u, n_t)).collect();
        Self::new(kind, BeamConstraint::PhaseOnly, ComplexMatrix::from_columns(&cols)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn constraint(&self) -> BeamConstraint {
        self.constraint
    }

    pub fn beams(&self) -> &ComplexMatrix<T> {
        &self.beams
    }

    pub fn n_t(&self) -> usize {
        self.beams.rows()
    }

    pub fn k(&self) -> usize {
        self.beams.cols()
    }

    pub fn beam(&self, j: usize) -> Vec<Cx<T>> {
        self.beams.column(j)
    }

    /// `|b_k^H h|^2` for every beam.
    pub fn beam_powers(&self, h: &[Cx<T>]) -> Vec<T> {
        self.beams.adjoint_mat_vec(h).iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CodebookDoc {
            kind: self.kind,
            constraint: self.constraint,
            n_t: self.n_t(),
            k: self.k(),
            entries: self.beams.as_slice().iter().map(|z| [z.re, z.im]).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CodebookDoc<T> = serde_json::from_str(s)?;
        let data = doc.entries.iter().map(|[re, im]| Complex::new(*re, *im)).collect();
        Self::new(doc.kind, doc.constraint, ComplexMatrix::from_row_major(doc.n_t, doc.k, data)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct CodebookDoc<T> {
    kind: CodebookKind,
    constraint: BeamConstraint,
    n_t: usize,
    k: usize,
    /// Row-major `[re, im]` pairs.
    entries: Vec<[T; 2]>,
}

/// Unitary DFT codebook, `[D]_{n,k} = exp(-j 2 pi n k / N) / sqrt(N)`.
pub fn dft_codebook<T: Real>(n: usize) -> Codebook<T> {
    let freqs: Vec<f64> = (0..n).map(|k| -(k as f64) / n as f64).collect();
    Codebook::steered(CodebookKind::DftFull, n, &freqs).expect("DFT beams are valid")
}

/// `n_t x (oversample * n_t)` grid of steering vectors. Column `k` is steered
/// at `u = -k / (oversample * n_t)`, so `oversample = 1` reproduces
/// [`dft_codebook`] column by column.
pub fn dft_dictionary<T: Real>(n_t: usize, oversample: usize) -> Result<Codebook<T>> {
    if oversample == 0 || n_t == 0 {
        return Err(Error::InvalidParameter("oversample and n_t must be positive".into()));
    }
    let d = oversample * n_t;
    let freqs: Vec<f64> = (0..d).map(|k| -(k as f64) / d as f64).collect();
    let kind = if oversample == 1 {
        CodebookKind::DftFull
    } else {
        CodebookKind::DftOversampled
    };
    Codebook::steered(kind, n_t, &freqs)
}

/// `k` narrow beams on a uniform grid `u = -j / k`; orthogonal when `k`
/// divides `n_t`.
pub fn dft_sub_codebook<T: Real>(n_t: usize, k: usize) -> Result<Codebook<T>> {
    if k == 0 || k > n_t {
        return Err(Error::InvalidParameter(format!("k = {k} for n_t = {n_t}")));
    }
    let freqs: Vec<f64> = (0..k).map(|j| -(j as f64) / k as f64).collect();
    Codebook::steered(CodebookKind::DftSub, n_t, &freqs)
}

pub fn random_codebook<T: Real>(n_t: usize, k: usize, seed: u64, constraint: BeamConstraint) -> Result<Codebook<T>> {
    if k == 0 || n_t == 0 {
        return Err(Error::InvalidParameter("empty random codebook".into()));
    }
    let mut rng = rng_from(seed, &[n_t as u64, k as u64, 0xb3]);
    let cols: Vec<Vec<Cx<T>>> = (0..k)
        .map(|_| match constraint {
            BeamConstraint::PhaseOnly => {
                let amp = T::lit(1.0 / (n_t as f64).sqrt());
                (0..n_t)
                    .map(|_| cis(T::lit(std::f64::consts::TAU * rng.random::<f64>())) * amp)
                    .collect()
            }
            BeamConstraint::Unconstrained => {
                let v: Vec<Cx<f64>> = (0..n_t)
                    .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                let n = norm(&v);
                v.iter().map(|z| Complex::new(T::lit(z.re / n), T::lit(z.im / n))).collect()
            }
        })
        .collect();
    Codebook::new(CodebookKind::Random, constraint, ComplexMatrix::from_columns(&cols)?)
}

/// `K` dB-domain RSRP values measured through one codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RsrpFingerprint<T> {
    pub values_db: Vec<T>,
    pub codebook_id: String,
    pub noise_sigma_db: f64,
}

impl<T: Real> RsrpFingerprint<T> {
    pub fn k(&self) -> usize {
        self.values_db.len()
    }
}

/// Noiseless received power below this (in dB) is clamped before the log.
pub const RSRP_FLOOR_DB: f64 = -250.0;

/// `r_k = P_dBm + 10 log10(|b_k^H h|^2) + n_k`, `n_k ~ N(0, noise_sigma_db^2)`.
pub fn measure_rsrp<T: Real>(
    channel: &UeChannel<T>,
    codebook: &Codebook<T>,
    tx_power_dbm: f64,
    noise_sigma_db: f64,
    seed: u64,
) -> Result<RsrpFingerprint<T>> {
    if channel.n_t() != codebook.n_t() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} antennas, codebook {}",
            channel.n_t(),
            codebook.n_t()
        )));
    }
    if !(noise_sigma_db >= 0.0 && noise_sigma_db.is_finite()) {
        return Err(Error::InvalidParameter("noise_sigma_db must be >= 0".into()));
    }
    if norm(&channel.h) == T::zero() {
        return Err(Error::ZeroChannel);
    }
    let floor = T::lit(RSRP_FLOOR_DB);
    let ten = T::lit(10.0);
    let offset = T::lit(tx_power_dbm);
    let mut rng = rng_from(seed, &[channel.ue_id, 0x5552]);
    let noise = Normal::new(0.0, noise_sigma_db).expect("validated sigma");
    let values_db = codebook
        .beam_powers(&channel.h)
        .into_iter()
        .map(|p| {
            let clean = (offset + ten * p.log10()).max(floor);
            let n: f64 = if noise_sigma_db > 0.0 { rng.sample(noise) } else { 0.0 };
            clean + T::lit(n)
        })
        .collect();
    Ok(RsrpFingerprint {
        values_db,
        codebook_id: codebook.id().to_string(),
        noise_sigma_db,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyDomain {
    /// Normalize the dB vector as reported.
    #[default]
    Db,
    /// Convert to linear power first; invariant to common gain.
    Linear,
}

/// Unit-norm normalized RSRP profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationKey<T>(Vec<T>);

impl<T: Real> CalibrationKey<T> {
    /// Normalizes an arbitrary nonzero vector.
    pub fn from_vector(v: Vec<T>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("calibration key"));
        }
        let n = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
        if n == T::zero() {
            return Err(Error::Empty("all-zero RSRP vector"));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cosine similarity with another key.
    pub fn cosine(&self, other: &Self) -> T {
        self.0.iter().zip(&other.0).map(|(a, b)| *a * *b).sum()
    }
}

pub fn make_key<T: Real>(fp: &RsrpFingerprint<T>, domain: KeyDomain) -> Result<CalibrationKey<T>> {
    match domain {
        KeyDomain::Db => CalibrationKey::from_vector(fp.values_db.clone()),
        KeyDomain::Linear => {
            let peak = fp.values_db.iter().copied().fold(T::neg_infinity(), T::max);
            if !peak.is_finite() {
                return Err(Error::NonFinite("RSRP fingerprint"));
            }
            // referencing the peak keeps the exponent bounded; it cancels in the norm
            let ten = T::lit(10.0);
            CalibrationKey::from_vector(
                fp.values_db
                    .iter()
                    .map(|v| ten.powf((*v - peak) / ten))
                    .collect(),
            )
        }
    }
}

/// `lambda_min(S S^H)`, the smallest sensing energy over unit directions.
pub fn worst_case_sensing_energy<T: Real>(codebook: &Codebook<T>) -> T {
    let s = codebook.beams();
    let ssh = s * &s.adjoint();
    hermitian_eig(&ssh)
        .expect("S S^H of a finite codebook is Hermitian and finite")
        .min_eigenvalue()
}

/// `1/(K(K-1)) sum_{i != j} |b_i^H b_j|^2`.
pub fn gram_offdiag_energy<T: Real>(codebook: &Codebook<T>) -> Result<T> {
    let k = codebook.k();
    if k < 2 {
        return Err(Error::InvalidParameter("Gram energy needs at least two beams".into()));
    }
    let beams = codebook.beams().columns();
    let mut acc = T::zero();
    for i in 0..k {
        for j in i + 1..k {
            acc = acc + inner(&beams[i], &beams[j]).norm_sqr();
        }
    }
    Ok((acc + acc) / T::lit((k * (k - 1)) as f64))
}

/// `max_{i != j} |b_i^H b_j|`.
pub fn max_coherence<T: Real>(codebook: &Codebook<T>) -> T {
    let beams = codebook.beams().columns();
    let mut worst = T::zero();
    for i in 0..beams.len() {
        for j in i + 1..beams.len() {
            worst = worst.max(inner(&beams[i], &beams[j]).norm());
        }
    }
    worst
}

/// `diag(S^H R S)`: average received power along each sensing beam.
pub fn directional_power_statistic<T: Real>(codebook: &Codebook<T>, r: &ComplexMatrix<T>) -> Result<Vec<T>> {
    if r.rows() != codebook.n_t() || !r.is_square() {
        return Err(Error::DimensionMismatch("covariance does not match codebook".into()));
    }
    Ok((0..codebook.k())
        .map(|j| {
            let s = codebook.beam(j);
            inner(&s, &r.mat_vec(&s)).re
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sqr;

    fn on_grid_channel(n_t: usize, bin: usize) -> UeChannel<f64> {
        // aligned with DFT column `bin`, i.e. u = -bin / n_t
        UeChannel::new(0, steering_vector(-(bin as f64) / n_t as f64, n_t), 0).unwrap()
    }

    #[test]
    fn dft_examples() {
        let d1 = dft_codebook::<f64>(1);
        assert!((d1.beams()[(0, 0)] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        let d4 = dft_codebook::<f64>(4);
        let ddh = d4.beams() * &d4.beams().adjoint();
        assert!((&ddh - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-12);
        assert!(d4.beams().as_slice().iter().all(|z| (z.norm() - 0.5).abs() < 1e-15));
        assert_eq!(d4.constraint(), BeamConstraint::PhaseOnly);
        assert!((worst_case_sensing_energy(&dft_codebook::<f64>(64)) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn dft_codebook_sign_convention() {
        let n = 8;
        let d = dft_codebook::<f64>(n);
        for r in 0..n {
            for k in 0..n {
                let th = -std::f64::consts::TAU * (r * k) as f64 / n as f64;
                let expect = Complex::new(th.cos(), th.sin()) / (n as f64).sqrt();
                assert!((d.beams()[(r, k)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dictionary_examples() {
        let d1 = dft_dictionary::<f64>(8, 1).unwrap();
        assert!((d1.beams() - dft_codebook::<f64>(8).beams()).frobenius_norm() < 1e-12);
        assert_eq!(dft_dictionary::<f64>(64, 4).unwrap().k(), 256);
        assert!(dft_dictionary::<f64>(8, 0).is_err());

        // adjacent coherence equals the Dirichlet kernel at 1/(4 n_t)
        let n_t = 16;
        let d = dft_dictionary::<f64>(n_t, 4).unwrap();
        let c = inner(&d.beam(3), &d.beam(4)).norm();
        let x = std::f64::consts::PI / (4.0 * n_t as f64);
        let dirichlet = ((n_t as f64) * x).sin() / ((n_t as f64) * x.sin());
        assert!((c - dirichlet.abs()).abs() < 1e-12);
    }

    #[test]
    fn aligned_beam_dominates_and_parseval_holds() {
        let n_t = 16;
        let ch = on_grid_channel(n_t, 5);
        let cb = dft_codebook::<f64>(n_t);
        let fp = measure_rsrp(&ch, &cb, 0.0, 0.0, 1).unwrap();
        let best = (0..n_t)
            .max_by(|&a, &b| fp.values_db[a].partial_cmp(&fp.values_db[b]).unwrap())
            .unwrap();
        assert_eq!(best, 5);
        assert!(fp.values_db[5].abs() < 1e-9); // |b^H h|^2 = ||h||^2 = 1

        let h = UeChannel::new(1, steering_vector(0.1234, n_t), 0).unwrap();
        let fp = measure_rsrp(&h, &cb, 20.0, 0.0, 1).unwrap();
        let total: f64 = fp.values_db.iter().map(|v| 10f64.powf(v / 10.0)).sum();
        assert!((total - 100.0 * norm_sqr(&h.h)).abs() <= 1e-9 * 100.0);
    }

    #[test]
    fn measurement_is_seeded() {
        let ch = UeChannel::new(3, steering_vector(0.2, 8), 0).unwrap();
        let cb = dft_codebook::<f64>(8);
        let a = measure_rsrp(&ch, &cb, 40.0, 1.0, 9).unwrap();
        assert_eq!(a, measure_rsrp(&ch, &cb, 40.0, 1.0, 9).unwrap());
        assert_ne!(a, measure_rsrp(&ch, &cb, 40.0, 1.0, 10).unwrap());
        assert_eq!(a.codebook_id, cb.id());
    }

    #[test]
    fn orthogonal_beam_hits_the_floor() {
        let ch = on_grid_channel(8, 0);
        let fp = measure_rsrp(&ch, &dft_codebook::<f64>(8), 0.0, 0.0, 0).unwrap();
        assert!(fp.values_db.iter().all(|v| v.is_finite()));
        assert!(fp.values_db[3] <= -200.0);
    }

    #[test]
    fn key_examples() {
        let fp = |v: Vec<f64>| RsrpFingerprint {
            values_db: v,
            codebook_id: String::new(),
            noise_sigma_db: 0.0,
        };
        let k = make_key(&fp(vec![0.0, -300.0, -300.0]), KeyDomain::Linear).unwrap();
        assert!((k.as_slice()[0] - 1.0).abs() < 1e-15 && k.as_slice()[1] < 1e-29);

        let base = fp(vec![-80.0, -85.0, -91.5]);
        let shifted = fp(vec![-70.0, -75.0, -81.5]);
        let (a, b) = (
            make_key(&base, KeyDomain::Linear).unwrap(),
            make_key(&shifted, KeyDomain::Linear).unwrap(),
        );
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }

        let k = make_key(&fp(vec![-80.0, -90.0]), KeyDomain::Db).unwrap();
        let n = (80f64 * 80.0 + 90.0 * 90.0).sqrt();
        assert!((k.as_slice()[0] + 80.0 / n).abs() < 1e-15);
        assert!((k.as_slice()[1] + 90.0 / n).abs() < 1e-15);
        assert!(make_key(&fp(vec![0.0, 0.0]), KeyDomain::Db).is_err());
    }

    #[test]
    fn sensing_energy_examples() {
        let s = Codebook::<f64>::new(
            CodebookKind::Learned,
            BeamConstraint::Unconstrained,
            ComplexMatrix::from_columns(&[
                vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)],
                vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)],
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(worst_case_sensing_energy(&s).abs() < 1e-12);
        assert!((gram_offdiag_energy(&s).unwrap() - 1.0).abs() < 1e-12);
        assert!(worst_case_sensing_energy(&dft_sub_codebook::<f64>(16, 4).unwrap()) <= 1e-9);
    }

    #[test]
    fn gram_energy_examples() {
        assert!(gram_offdiag_energy(&dft_codebook::<f64>(16)).unwrap() < 1e-25);
        assert!(gram_offdiag_energy(&dft_sub_codebook::<f64>(64, 16).unwrap()).unwrap() < 1e-25);
        let one = dft_sub_codebook::<f64>(8, 1).unwrap();
        assert!(gram_offdiag_energy(&one).is_err());
    }

    #[test]
    fn directional_power_examples() {
        let n_t = 16;
        let cb = dft_codebook::<f64>(n_t);
        let ones = directional_power_statistic(&cb, &ComplexMatrix::identity(n_t)).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let u = 0.0917;
        let r = ComplexMatrix::outer(&steering_vector::<f64>(u, n_t));
        let stat = directional_power_statistic(&cb, &r).unwrap();
        for (k, v) in stat.iter().enumerate() {
            // beam k sits at -k/n_t; |a(-k/n)^H a(u)|^2 is a squared Dirichlet kernel
            let delta = u + k as f64 / n_t as f64;
            let x = std::f64::consts::PI * delta;
            let dir = if x.sin().abs() < 1e-12 {
                1.0
            } else {
                ((n_t as f64) * x).sin() / ((n_t as f64) * x.sin())
            };
            assert!((v - dir * dir).abs() < 1e-12, "beam {k}");
        }
    }

    #[test]
    fn codebook_json_round_trip_is_exact() {
        let cb = random_codebook::<f64>(8, 3, 4, BeamConstraint::Unconstrained).unwrap();
        let back = Codebook::<f64>::from_json(&cb.to_json().unwrap()).unwrap();
        assert_eq!(cb, back);
        let cb32 = random_codebook::<f32>(8, 3, 4, BeamConstraint::PhaseOnly).unwrap();
        assert_eq!(cb32, Codebook::<f32>::from_json(&cb32.to_json().unwrap()).unwrap());
    }

    #[test]
    fn invalid_codebooks_are_rejected() {
        let m = ComplexMatrix::from_columns(&[vec![Complex::new(0.5, 0.0), Complex::new(0.5, 0.0)]]).unwrap();
        assert!(Codebook::new(CodebookKind::Learned, BeamConstraint::Unconstrained, m).is_err());
        let m = ComplexMatrix::from_columns(&[vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]]).unwrap();
        assert!(Codebook::new(CodebookKind::Learned, BeamConstraint::PhaseOnly, m).is_err());
    }
}
