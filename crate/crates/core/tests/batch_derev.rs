mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rtf_mclp::batch_derev::*;
use rtf_mclp::numerics::{dot_conj, CMatrix, HermitianMatrix, Ridge};
use rtf_mclp::rir_sim::ArrayGeometry;
use rtf_mclp::stft::StftTensor;

fn flat(g: &CMatrix) -> Vec<Complex64> {
    g.as_slice().to_vec()
}

fn nalgebra_flat(g: &nalgebra::DMatrix<Complex64>) -> Vec<Complex64> {
    // row-major to match CMatrix
    (0..g.nrows()).flat_map(|i| (0..g.ncols()).map(move |j| g[(i, j)])).collect()
}

#[test]
fn predictor_index_table() {
    // x_m[n, k] = 1000 m + 10 n + k
    let mut t = StftTensor::zeros(small_config(3), 10, 2, 0);
    for n in 0..10 {
        for k in 0..3 {
            for m in 0..2 {
                t.set(n, k, m, c((1000 * m + 10 * n + k) as f64, 0.0));
            }
        }
    }
    let phi = build_predictor(&t, 7, 1, 2, 2);
    let expect = [41.0, 31.0, 1041.0, 1031.0];
    assert_eq!(phi.iter().map(|z| z.re).collect::<Vec<_>>(), expect);
    let phi = build_predictor(&t, 3, 2, 2, 2);
    assert_eq!(phi.iter().map(|z| z.re).collect::<Vec<_>>(), [2.0, 0.0, 1002.0, 0.0]);
    let phi = build_predictor(&t, 6, 0, 1, 1);
    assert_eq!(phi[0].re, 40.0);
    assert!(build_predictor(&t, 2, 0, 3, 2).iter().all(|z| z.norm() == 0.0));
}

#[test]
fn mclp_matches_dense_normal_equations() {
    let start = std::time::Instant::now();
    for seed in 0..20 {
        let t = random_tensor(50, 3, 2, seed);
        let gamma = random_gamma(50, 3, 100 + seed);
        let g = estimate_mclp_filters(&t, &gamma, 2, 1, Ridge::Absolute(0.0)).unwrap();
        for k in 0..3 {
            let oracle = dense_mclp(&t, &gamma, k, 2, 1, 0.0);
            let err = rel_err(&flat(&g[k]), &nalgebra_flat(&oracle));
            assert!(err < 1e-8, "seed {seed} bin {k}: {err:e}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn mclp_ridge_matches_loaded_oracle() {
    let t = random_tensor(30, 2, 2, 7);
    let gamma = random_gamma(30, 2, 8);
    let g = estimate_mclp_filters(&t, &gamma, 3, 2, Ridge::Absolute(0.5)).unwrap();
    for k in 0..2 {
        let oracle = dense_mclp(&t, &gamma, k, 3, 2, 0.5);
        assert!(rel_err(&flat(&g[k]), &nalgebra_flat(&oracle)) < 1e-10);
    }
}

#[test]
fn scalar_prediction_recovers_conjugate_coefficient() {
    // x[n] = cc · x[n-2] with nonzero seeds at n = 0, 1
    let cc = c(0.6, -0.3);
    let mut t = StftTensor::zeros(small_config(2), 40, 1, 0);
    for k in 0..2 {
        t.set(0, k, 0, c(1.0, 0.5));
        t.set(1, k, 0, c(-0.4, 1.0));
        for n in 2..40 {
            let v = cc * t.get(n - 2, k, 0);
            t.set(n, k, 0, v);
        }
    }
    let gamma = GammaField::constant(40, 2, 1.0);
    let g = estimate_mclp_filters(&t, &gamma, 1, 1, Ridge::default()).unwrap();
    for k in 0..2 {
        assert!((g[k][(0, 0)] - cc.conj()).norm() < 1e-5);
    }
}

#[test]
fn zero_history_gives_zero_filter() {
    let mut t = StftTensor::zeros(small_config(2), 5, 2, 0);
    t.set(0, 0, 0, c(1.0, 0.0));
    let gamma = GammaField::constant(5, 2, 1.0);
    // D = 4 leaves no frame with history
    let g = estimate_mclp_filters(&t, &gamma, 1, 4, Ridge::default()).unwrap();
    assert!(g.iter().all(|m| m.max_abs() == 0.0));
}

#[test]
fn perfect_prediction_leaves_small_residual() {
    // x[n] = U x[n-2] with U unitary, so the history predicts every frame
    let (taps, delay, mics, frames) = (2, 1, 2, 200);
    let mut r = rng(3);
    let mut t = StftTensor::zeros(small_config(2), frames, mics, 0);
    for k in 0..2 {
        let th = 0.3 + k as f64;
        let (p, q) = (c(th.cos(), 0.0) * c(0.0, 0.7).exp(), c(th.sin(), 0.0) * c(0.0, -0.2).exp());
        let u = [[p, -q.conj()], [q, p.conj()]];
        for n in 0..frames {
            for m in 0..mics {
                let v = if n < 2 { crandn(&mut r) } else { u[m][0] * t.get(n - 2, k, 0) + u[m][1] * t.get(n - 2, k, 1) };
                t.set(n, k, m, v);
            }
        }
    }
    let gamma = GammaField::constant(frames, 2, 1.0);
    let g = estimate_mclp_filters(&t, &gamma, taps, delay, Ridge::Absolute(0.0)).unwrap();
    let (d, late) = prediction_residual(&t, &g, taps, delay).unwrap();
    let interior = |x: &StftTensor| -> f64 {
        (10..frames).flat_map(|n| (0..2).map(move |k| (n, k))).map(|(n, k)| x.vector(n, k).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
    };
    assert!(interior(&d) <= 1e-8 * interior(&t));
    for ((a, b), x) in d.as_slice().iter().zip(late.as_slice()).zip(t.as_slice()) {
        assert!((a + b - x).norm() <= 1e-12 * x.norm().max(1.0));
    }
}

#[test]
fn zero_filter_residual_is_input() {
    let t = random_tensor(12, 3, 2, 5);
    let g = vec![CMatrix::zeros(4, 2); 3];
    let (d, r) = prediction_residual(&t, &g, 2, 1).unwrap();
    assert_eq!(d.as_slice(), t.as_slice());
    assert!(r.as_slice().iter().all(|z| z.norm() == 0.0));
}

#[test]
fn rtf_of_rank_one_frames() {
    let a0 = [c(1.0, 0.0), c(0.5, -0.3)];
    let mut r = rng(11);
    let frames: Vec<Complex64> = (0..40).flat_map(|_| {
        let s = crandn(&mut r);
        [a0[0] * s, a0[1] * s]
    }).collect();
    let est = estimate_rtf(&frames, 2, 0, None);
    assert!(!est.reference_silent);
    assert_eq!(est.a[0], c(1.0, 0.0));
    assert!((est.a[1] - a0[1]).norm() < 1e-10);
}

#[test]
fn rtf_of_loaded_covariance() {
    let mut r = HermitianMatrix::outer(&[c(1.0, 0.0), c(2.0, 0.0)]);
    r.add_to_diagonal(0.1);
    let a = rtf_from_covariance(&r, 0).unwrap();
    assert_eq!(a[0], c(1.0, 0.0));
    assert!((a[1] - c(2.0 / 1.1, 0.0)).norm() < 1e-14);
}

#[test]
fn rtf_silent_reference_falls_back() {
    let frames = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(2.0, 1.0)];
    let prev = [c(1.0, 0.0), c(0.3, 0.1)];
    let est = estimate_rtf(&frames, 2, 0, Some(&prev));
    assert!(est.reference_silent);
    assert_eq!(est.a, prev);
}

#[test]
fn mvdr_closed_forms() {
    let w = mvdr_weights(&HermitianMatrix::identity(2), &[c(1.0, 0.0), c(0.0, 0.0)], Ridge::Absolute(0.0)).unwrap();
    assert!((w[0] - c(1.0, 0.0)).norm() < 1e-15 && w[1].norm() < 1e-15);
    let w = mvdr_weights(&HermitianMatrix::diagonal(&[1.0, 2.0]), &[c(1.0, 0.0), c(1.0, 0.0)], Ridge::Absolute(0.0)).unwrap();
    assert!((w[0] - c(2.0 / 3.0, 0.0)).norm() < 1e-14);
    assert!((w[1] - c(1.0 / 3.0, 0.0)).norm() < 1e-14);
}

fn random_pd(r: &mut rand_chacha::ChaCha8Rng, dim: usize) -> HermitianMatrix {
    let mut h = HermitianMatrix::scaled_identity(dim, 0.1);
    for _ in 0..dim + 1 {
        h.add_outer(&cvec(r, dim), 1.0);
    }
    h
}

#[test]
fn mvdr_matches_lagrangian_oracle() {
    let mut r = rng(21);
    for _ in 0..20 {
        let cov = random_pd(&mut r, 3);
        let a = cvec(&mut r, 3);
        let w = mvdr_weights(&cov, &a, Ridge::Absolute(0.0)).unwrap();
        assert!(distortion_error(&w, &a) <= 1e-10);
        // v = R⁻¹a / (aᴴR⁻¹a) through nalgebra
        let m = nalgebra::DMatrix::from_fn(3, 3, |i, j| cov.get(i, j));
        let av = nalgebra::DVector::from_column_slice(&a);
        let y = m.clone().lu().solve(&av).unwrap();
        let denom = av.dotc(&y);
        let oracle: Vec<Complex64> = y.iter().map(|v| v / denom.conj()).collect();
        assert!(rel_err(&w, &oracle) < 1e-10);
        // every other feasible v has at least the same output power
        let p = cov.quadratic_form(&w);
        for _ in 0..10 {
            let mut v = cvec(&mut r, 3);
            let s = dot_conj(&v, &a);
            let corr = (c(1.0, 0.0) - s) / dot_conj(&a, &a);
            for (vi, ai) in v.iter_mut().zip(&a) {
                *vi += ai * corr.conj();
            }
            assert!(distortion_error(&v, &a) < 1e-10);
            assert!(p <= cov.quadratic_form(&v) * (1.0 + 1e-10));
        }
    }
}

#[test]
fn sdb_single_mic_is_pass_through() {
    let t = random_tensor(8, 5, 1, 2);
    let array = ArrayGeometry::new(vec![[1.0, 1.0, 1.0]]).unwrap();
    let out = run_sdb(&t, &array, [0.0, 1.0, 0.0], &SdbConfig::default()).unwrap();
    for (a, b) in out.enhanced.as_slice().iter().zip(t.as_slice()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn diffuse_coherence_is_finite_at_dc() {
    let array = ArrayGeometry::uca([2.0, 2.0, 1.0], 0.1, 4).unwrap();
    let g = diffuse_coherence(&array, 0.0, 343.0);
    assert!((g.get(0, 1) - c(1.0, 0.0)).norm() < 1e-12);
    let a = free_field_rtf(&array, [0.0, 1.0, 0.0], 0.0, 343.0, 0);
    let w = mvdr_weights(&g, &a, Ridge::Relative(1e-2)).unwrap();
    assert!(w.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    assert!(distortion_error(&w, &a) < 1e-10);
}

fn short_config() -> BatchConfig {
    BatchConfig {
        taps: 3,
        delay: 1,
        iterations: 2,
        ar_order: 4,
        ..BatchConfig::default()
    }
}

#[test]
fn rtf_mclp_keeps_constraint_and_reference_normalization() {
    let t = random_tensor(60, 9, 3, 9);
    let out = run_rtf_mclp(&t, &short_config()).unwrap();
    let rtf_filters = match &out.filters {
        rtf_mclp::filters::FilterLog::Batch { bins, .. } => bins.clone(),
        _ => unreachable!(),
    };
    for (k, f) in rtf_filters.iter().enumerate() {
        assert_eq!(out.rtf[k][0], c(1.0, 0.0));
        assert!(distortion_error(f.w.as_ref().unwrap(), &out.rtf[k]) <= 1e-10);
    }
}

#[test]
fn wpe_and_rtf_mclp_share_first_filters_for_equal_gamma() {
    let t = random_tensor(40, 5, 2, 13);
    let gamma = random_gamma(40, 5, 14);
    let a = estimate_mclp_filters(&t, &gamma, 2, 1, Ridge::default()).unwrap();
    let b = estimate_mclp_filters(&t, &gamma, 2, 1, Ridge::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rtf_mclp_is_scale_equivariant() {
    let t = random_tensor(60, 9, 2, 17);
    let cfg = short_config();
    let base = run_rtf_mclp(&t, &cfg).unwrap();
    let scaled = run_rtf_mclp(&t.scaled(3.5), &cfg).unwrap();
    let expect: Vec<Complex64> = base.enhanced.as_slice().iter().map(|z| z * 3.5).collect();
    assert!(rel_err(scaled.enhanced.as_slice(), &expect) < 1e-8);
}

#[test]
fn known_rtf_is_used_verbatim() {
    let t = random_tensor(40, 9, 2, 19);
    let known: BinVectors = (0..9).map(|k| vec![c(1.0, 0.0), c(0.2 * k as f64, -0.1)]).collect();
    let cfg = BatchConfig {
        known_rtf: Some(known.clone()),
        ..short_config()
    };
    let out = run_rtf_mclp(&t, &cfg).unwrap();
    assert_eq!(out.rtf, known);
}

#[test]
fn ar_order_beyond_half_fft_is_rejected() {
    let t = random_tensor(20, 5, 2, 1);
    assert!(matches!(run_rtf_mclp(&t, &short_config()), Err(rtf_mclp::Error::Config(_))));
    assert!(matches!(run_wpe(&t, &short_config()), Err(rtf_mclp::Error::Config(_))));
}

#[test]
fn known_rtf_shape_is_checked() {
    let t = random_tensor(20, 5, 2, 1);
    let cfg = BatchConfig {
        known_rtf: Some(vec![vec![c(1.0, 0.0)]; 5]),
        ..short_config()
    };
    assert!(run_rtf_mclp(&t, &cfg).is_err());
}

#[test]
fn cascade_reuses_wpe_prediction() {
    let t = random_tensor(50, 9, 2, 23);
    let cfg = short_config();
    let wpe = run_wpe(&t, &cfg).unwrap();
    let a = cascade_from_wpe(&t, &wpe, &cfg).unwrap();
    let b = run_cascade(&t, &cfg).unwrap();
    assert_eq!(a.enhanced.as_slice(), b.enhanced.as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mclp_oracle_holds_for_small_shapes(seed in 0u64..10_000, mics in 1usize..3, taps in 1usize..4, delay in 0usize..3, frames in 20usize..100) {
        prop_assume!(mics * taps <= 8);
        let t = random_tensor(frames, 2, mics, seed);
        let gamma = random_gamma(frames, 2, seed + 1);
        let g = estimate_mclp_filters(&t, &gamma, taps, delay, Ridge::Absolute(1e-9)).unwrap();
        for k in 0..2 {
            let oracle = dense_mclp(&t, &gamma, k, taps, delay, 1e-9);
            prop_assert!(rel_err(&flat(&g[k]), &nalgebra_flat(&oracle)) < 1e-8);
        }
    }

    #[test]
    fn decomposition_is_exact(seed in 0u64..10_000) {
        let t = random_tensor(30, 3, 2, seed);
        let gamma = random_gamma(30, 3, seed + 7);
        let g = estimate_mclp_filters(&t, &gamma, 2, 1, Ridge::default()).unwrap();
        let (d, r) = prediction_residual(&t, &g, 2, 1).unwrap();
        for ((a, b), x) in d.as_slice().iter().zip(r.as_slice()).zip(t.as_slice()) {
            prop_assert!((a + b - x).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn mvdr_constraint_holds(seed in 0u64..10_000, dim in 2usize..6) {
        let mut r = rng(seed);
        let cov = random_pd(&mut r, dim);
        let a = cvec(&mut r, dim);
        let w = mvdr_weights(&cov, &a, Ridge::default()).unwrap();
        prop_assert!(distortion_error(&w, &a) <= 1e-10);
    }

    #[test]
    fn rtf_reference_entry_is_one(seed in 0u64..10_000, reference in 0usize..3) {
        let mut r = rng(seed);
        let frames = cvec(&mut r, 3 * 10);
        let est = estimate_rtf(&frames, 3, reference, None);
        prop_assert_eq!(est.a[reference], c(1.0, 0.0));
    }
}
