mod common;

use common::{random_psd, random_vec, site_channels};
use proptest::prelude::*;
use sifo_core::baselines::{dft_select, omp, Baseline, BaselineConfig};
use sifo_core::numerics::{hermitian_eig, orthonormalize, projector_defects, projector_from_orthonormal, ComplexMatrix};
use sifo_core::rng::rng_from;
use sifo_core::subspace::{capture_efficiency, kyfan_loss_and_bound, rank_q_extract};
use sifo_core::{Complex64, Matrix};

fn random_projector(n: usize, q: usize, rng: &mut impl rand::Rng) -> Matrix {
    let cols: Vec<_> = (0..q).map(|_| random_vec(n, rng)).collect();
    projector_from_orthonormal(&orthonormalize(&ComplexMatrix::from_columns(&cols).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capture_is_bounded_and_monotone_under_nesting(seed in any::<u64>(), n in 2usize..20, q1 in 1usize..6) {
        let mut rng = rng_from(seed, &[]);
        let q1 = q1.min(n - 1);
        let cols: Vec<_> = (0..n).map(|_| random_vec(n, &mut rng)).collect();
        let all = orthonormalize(&ComplexMatrix::from_columns(&cols).unwrap()).unwrap();
        let idx_small: Vec<usize> = (0..q1).collect();
        let idx_big: Vec<usize> = (0..q1 + 1).collect();
        let p1 = projector_from_orthonormal(&all.select_columns(&idx_small));
        let p2 = projector_from_orthonormal(&all.select_columns(&idx_big));
        let h = random_vec(n, &mut rng);
        let (e1, e2) = (capture_efficiency(&p1, &h).unwrap(), capture_efficiency(&p2, &h).unwrap());
        prop_assert!((0.0..=1.0 + 1e-9).contains(&e1));
        prop_assert!(e1 <= e2 + 1e-9);
    }

    #[test]
    fn capture_ignores_global_phase(seed in any::<u64>(), phi in 0.0f64..6.3, c in 0.01f64..100.0) {
        let mut rng = rng_from(seed, &[]);
        let p = random_projector(12, 3, &mut rng);
        let h = random_vec(12, &mut rng);
        let h2: Vec<Complex64> = h.iter().map(|z| z * Complex64::from_polar(c, phi)).collect();
        prop_assert!((capture_efficiency(&p, &h).unwrap() - capture_efficiency(&p, &h2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn extraction_is_scale_invariant(seed in any::<u64>(), s in 1e-3f64..1e3) {
        let a = random_psd(10, 6, seed);
        let p = rank_q_extract(&a, 3, "a").unwrap().projector;
        let ps = rank_q_extract(&a.scale(s), 3, "b").unwrap().projector;
        prop_assert!((&p - &ps).frobenius_norm() < 1e-8);
        let (idem, herm, tr) = projector_defects(&p, 3);
        prop_assert!(idem < 1e-9 && herm < 1e-12 && tr < 1e-8);
    }

    #[test]
    fn dft_select_full_rank_captures_everything(seed in any::<u64>(), n in 1usize..24) {
        let mut rng = rng_from(seed, &[]);
        let h = random_vec(n, &mut rng);
        let d = dft_select(&h, n).unwrap();
        prop_assert!((capture_efficiency(&d.projector, &h).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn omp_residuals_decrease(seed in any::<u64>()) {
        let mut rng = rng_from(seed, &[]);
        let h = random_vec(16, &mut rng);
        let dict = sifo_core::probing::dft_dictionary::<f64>(16, 4).unwrap();
        let (d, t) = omp(&h, dict.beams(), 5).unwrap();
        for w in t.residual_norms_sqr.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        let eta = capture_efficiency(&d.projector, &h).unwrap();
        let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((eta - (1.0 - t.residual_norms_sqr.last().unwrap() / hn)).abs() < 1e-10);
    }
}

#[test]
fn dominant_projector_wins_against_random_competitors() {
    let mut rng = rng_from(17, &[]);
    for case in 0..100 {
        let a = random_psd(16, 1 + case % 16, case as u64);
        let best = rank_q_extract(&a, 4, "best").unwrap().projector;
        let score = (&best * &a).trace().re;
        let dist = (&a - &best).frobenius_norm();
        for _ in 0..200 {
            let p = random_projector(16, 4, &mut rng);
            assert!((&p * &a).trace().re <= score + 1e-12);
            assert!((&a - &p).frobenius_norm() >= dist - 1e-12);
        }
    }
}

#[test]
fn capture_loss_respects_bound() {
    let mut rng = rng_from(23, &[]);
    for case in 0..300u64 {
        let r = random_psd(16, 1 + (case % 8) as usize, case);
        let e = common::random_hermitian(16, &mut rng).scale(0.02 * (1 + case % 5) as f64);
        let a = &r + &e;
        let (loss, bound) = kyfan_loss_and_bound(&a, &r, 4).unwrap();
        assert!(loss >= -1e-10 && loss <= bound + 1e-8, "case {case}: {loss} vs {bound}");
    }
}

#[test]
fn oversampled_omp_beats_dft_selection_on_average() {
    let n_t = 64;
    for seed in 0..2 {
        let (_, chans) = site_channels(n_t, 4, 500, 60 + seed);
        let sel = Baseline::<f64>::new(BaselineConfig::dft_select(4), n_t).unwrap();
        let omp = Baseline::<f64>::new(BaselineConfig::dft_omp(4), n_t).unwrap();
        let mean = |b: &Baseline<f64>| {
            chans
                .iter()
                .map(|c| capture_efficiency(&b.decide(&c.h).unwrap().projector, &c.h).unwrap())
                .sum::<f64>()
                / chans.len() as f64
        };
        let (es, eo) = (mean(&sel), mean(&omp));
        assert!(eo >= es - 1e-9 && es >= 0.5, "select {es} omp {eo}");
    }
}

#[test]
fn eigensolver_reconstructs_random_matrices() {
    let mut rng = rng_from(5, &[]);
    for n in [1usize, 2, 3, 7, 16, 33] {
        for _ in 0..5 {
            let a = common::random_hermitian(n, &mut rng);
            let eig = hermitian_eig(&a).unwrap();
            let err = (&eig.reconstruct() - &a).frobenius_norm() / a.frobenius_norm();
            assert!(err <= 1e-10);
        }
    }
}
