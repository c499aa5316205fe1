mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rtf_mclp::batch_derev::{distortion_error, estimate_mclp_filters, run_rtf_mclp, BatchConfig};
use rtf_mclp::filters::fill_predictor;
use rtf_mclp::metrics::fwsnr;
use rtf_mclp::numerics::{HermitianMatrix, Ridge};
use rtf_mclp::online_derev::*;
use rtf_mclp::rir_sim::{layout, render_static, ArrayGeometry, RirOptions, Room, Scene};
use rtf_mclp::speech::{synthesize_utterance, Voice};
use rtf_mclp::stft::{analyze, StftConfig, StftTensor};

fn state(mics: usize, taps: usize, eta: f64) -> KalmanBinState {
    KalmanBinState::new(mics, taps, eta, 1e-6, 0, 1e-6)
}

#[test]
fn scalar_kalman_arithmetic() {
    let mut s = state(1, 1, 1.0);
    let e = kalman_update(&mut s, &[c(2.0, 0.0)], &[c(1.0, 0.0)], 1.0);
    assert_eq!(e, vec![c(2.0, 0.0)]);
    assert!((s.mu[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    assert!((s.sigma.get(0, 0).re - 0.5).abs() < 1e-15);
}

#[test]
fn huge_observation_noise_freezes_state() {
    let mut r = rng(1);
    let mut s = state(2, 3, 1e-3);
    let phi = cvec(&mut r, 6);
    let x = cvec(&mut r, 2);
    kalman_update(&mut s, &x, &phi, 1e12);
    assert!(s.mu.max_abs() < 1e-9 * x.iter().map(|v| v.norm()).fold(0.0, f64::max));
}

#[test]
fn predict_adds_innovation() {
    let mut s = state(1, 3, 1.0);
    s.lambda = vec![0.0; 3];
    let before = s.sigma.clone();
    kalman_predict(&mut s);
    assert_eq!(s.sigma, before);
    s.lambda = vec![0.5, 1.0, 2.0];
    kalman_predict(&mut s);
    for i in 0..3 {
        assert!((s.sigma.get(i, i).re - 1.0 - s.lambda[i]).abs() < 1e-15);
    }
    assert!(s.sigma.hermiticity_error() < 1e-12);
}

#[test]
fn innovation_from_mean_change() {
    let eps = 1e-6;
    let mut s = state(1, 2, 1.0);
    update_innovation_cov(&mut s, eps);
    assert!(s.lambda.iter().all(|l| *l == eps));
    s.mu[(0, 0)] = c(3.0, 0.0);
    update_innovation_cov(&mut s, eps);
    assert!((s.lambda[0] - 9.0 - eps).abs() < 1e-12);

    let mut s = state(2, 1, 1.0);
    s.mu[(0, 0)] = c(1.0, 0.0);
    s.mu[(0, 1)] = c(0.0, 1.0);
    update_innovation_cov(&mut s, eps);
    assert!((s.lambda[0] - 1.0 - eps).abs() < 1e-12);
}

#[test]
fn a_priori_uses_initial_filters() {
    let s = state(4, 2, 1e-3);
    let x = [c(1.0, 0.0), c(2.0, 1.0), c(-1.0, 0.5), c(0.0, 0.0)];
    let phi = vec![c(0.0, 0.0); 8];
    let d = a_priori_desired(&s, &x, &phi);
    let expect = x.iter().sum::<Complex64>() / 2.0;
    assert!((d - expect).norm() < 1e-14);
    assert_eq!(a_priori_desired(&s, &[c(0.0, 0.0); 4], &phi), c(0.0, 0.0));
}

#[test]
fn gated_rtf_update() {
    let mut s = state(2, 1, 1e-3);
    s.r_dd = HermitianMatrix::identity(2);
    let a_before = s.a.clone();
    // early energy below 0.1 of the late energy
    let accepted = update_rtf_gated(&mut s, &[c(0.1, 0.0), c(0.1, 0.0)], &[c(1.0, 0.0), c(1.0, 0.0)], 0.1, 0.1);
    assert!(!accepted);
    assert_eq!(s.a, a_before);

    let a0 = [c(1.0, 0.0), c(0.4, 0.7)];
    let mut r = rng(5);
    let mut errs = vec![];
    for _ in 0..400 {
        let v = crandn(&mut r);
        assert!(update_rtf_gated(&mut s, &[a0[0] * v, a0[1] * v], &[c(1e-3, 0.0); 2], 0.05, 0.1));
        assert_eq!(s.a[0], c(1.0, 0.0));
        errs.push((s.a[1] - a0[1]).norm());
    }
    assert!(errs[399] < 1e-6 && errs[399] < errs[50]);
}

#[test]
fn reverb_covariance_recursion() {
    let mut s = state(2, 1, 1e-3);
    s.r_rr = HermitianMatrix::identity(2);
    update_reverb_cov(&mut s, &[c(0.0, 0.0); 2], 1.0, 0.1);
    assert!((s.r_rr.get(0, 0).re - 0.9).abs() < 1e-15);
    let r = [c(1.0, 0.5), c(-0.3, 0.2)];
    for _ in 0..2000 {
        update_reverb_cov(&mut s, &r, 2.0, 0.1);
    }
    let target = {
        let mut h = HermitianMatrix::outer(&r);
        h.scale(0.5);
        h
    };
    for i in 0..2 {
        for j in 0..2 {
            assert!((s.r_rr.get(i, j) - target.get(i, j)).norm() < 1e-12);
        }
    }
    assert!(s.r_rr.hermiticity_error() < 1e-12);
}

#[test]
fn zero_innovation_matches_batch_ridged_least_squares() {
    let start = std::time::Instant::now();
    let (taps, delay, mics, frames, bins) = (3, 2, 2, 500, 3);
    let eta = 1e-3;
    let t = random_tensor(frames, bins, mics, 42);
    let gamma = random_gamma(frames, bins, 43);
    let batch = estimate_mclp_filters(&t, &gamma, taps, delay, Ridge::Absolute(1.0 / eta)).unwrap();
    let mut phi = vec![c(0.0, 0.0); mics * taps];
    for k in 0..bins {
        let mut s = state(mics, taps, eta);
        s.lambda.iter_mut().for_each(|l| *l = 0.0);
        for n in 0..frames {
            fill_predictor(&t, n, k, taps, delay, &mut phi);
            kalman_predict(&mut s);
            kalman_update(&mut s, t.vector(n, k), &phi, gamma.get(n, k));
        }
        let err = rel_err(s.mu.as_slice(), batch[k].as_slice());
        assert!(err < 1e-6, "bin {k}: {err:e}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn kalman_gain_is_shared_across_mics() {
    let mut r = rng(8);
    let mut s = state(3, 2, 1e-2);
    for _ in 0..5 {
        let phi = cvec(&mut r, 6);
        kalman_predict(&mut s);
        s.prev_mu = s.mu.clone();
        let e = kalman_update(&mut s, &cvec(&mut r, 3), &phi, 1.0);
        // Δμ_m = K e_m*, so Δμ_m / e_m* is the same vector for every m
        let gain = |m: usize| -> Vec<Complex64> {
            (0..6).map(|i| (s.mu[(i, m)] - s.prev_mu[(i, m)]) / e[m].conj()).collect()
        };
        let k0 = gain(0);
        for m in 1..3 {
            assert!(rel_err(&gain(m), &k0) < 1e-10);
        }
        update_innovation_cov(&mut s, 1e-6);
    }
}

fn sigma_min_eig(s: &HermitianMatrix) -> (f64, f64) {
    let m = nalgebra::DMatrix::from_fn(s.dim(), s.dim(), |i, j| s.get(i, j));
    let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn small_online() -> OnlineConfig {
    OnlineConfig {
        taps: 3,
        delay: 1,
        ar_order: 4,
        ..OnlineConfig::default()
    }
}

#[test]
fn frame_zero_passes_input_through_residual() {
    let t = random_tensor(5, 9, 3, 4);
    let mut engine = OnlineDereverb::new(*t.config(), 3, small_online()).unwrap();
    engine.process_frame(t.frame(0)).unwrap();
    for (k, s) in engine.states().iter().enumerate() {
        let mut d = vec![c(0.0, 0.0); 3];
        s.residual_into(t.vector(0, k), &[c(0.0, 0.0); 9], &mut d);
        assert_eq!(d, t.vector(0, k));
    }
}

#[test]
fn output_is_causal() {
    let t = random_tensor(80, 9, 2, 6);
    let full = run_online(&t, &small_online()).unwrap();
    let part = run_online(&t.prefix(50), &small_online()).unwrap();
    for n in 0..50 {
        assert_eq!(part.enhanced.frame(n), full.enhanced.frame(n));
    }
}

#[test]
fn silence_in_silence_out() {
    let t = StftTensor::zeros(small_config(9), 40, 2, 0);
    let out = run_online(&t, &small_online()).unwrap();
    assert!(out.enhanced.as_slice().iter().all(|z| z.norm() == 0.0));
    assert_eq!(out.report.frame_times.len(), 40);
}

struct ConstraintCheck {
    worst: f64,
    known: Vec<Vec<Complex64>>,
}

impl FrameObserver for ConstraintCheck {
    fn frame(&mut self, _n: usize, states: &[KalmanBinState]) {
        for (k, s) in states.iter().enumerate() {
            assert_eq!(s.a, self.known[k]);
            self.worst = self.worst.max(distortion_error(&s.w, &s.a));
        }
    }
}

#[test]
fn known_rtf_is_kept_and_constraint_holds() {
    let t = random_tensor(60, 9, 3, 12);
    let mut r = rng(13);
    let known: Vec<Vec<Complex64>> = (0..9)
        .map(|_| {
            let mut a = cvec(&mut r, 3);
            a[0] = c(1.0, 0.0);
            a
        })
        .collect();
    let cfg = OnlineConfig {
        known_rtf: Some(known.clone()),
        ..small_online()
    };
    let mut check = ConstraintCheck { worst: 0.0, known };
    let out = run_online_observed(&t, &cfg, &mut [&mut check]).unwrap();
    assert!(check.worst <= 1e-10);
    assert_eq!(out.report.rtf_updates, 0);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        OnlineConfig { alpha_noise: 0.0, ..small_online() },
        OnlineConfig { alpha_rtf: 1.5, ..small_online() },
        OnlineConfig { epsilon: 0.0, ..small_online() },
        OnlineConfig { eta: -1.0, ..small_online() },
        OnlineConfig { reference_mic: 2, ..small_online() },
        OnlineConfig { ar_order: 8, ..small_online() },
    ] {
        assert!(OnlineDereverb::new(small_config(9), 2, cfg).is_err());
    }
    let mut engine = OnlineDereverb::new(small_config(9), 2, small_online()).unwrap();
    assert!(engine.process_frame(&[c(0.0, 0.0); 3]).is_err());
}

#[test]
fn probe_filter_reproduces_output_on_the_mixture() {
    let t = random_tensor(40, 9, 2, 31);
    let cfg = small_online();
    let mut probe = ProbeFilter::new(&t, &cfg);
    let out = run_online_observed(&t, &cfg, &mut [&mut probe]).unwrap();
    let y = probe.into_output();
    assert!(rel_err(y.as_slice(), out.enhanced.as_slice()) < 1e-12);
}

#[test]
fn tracks_batch_quality_on_a_stationary_scene() {
    let room = Room::default();
    let array = ArrayGeometry::uca(layout::ARRAY_CENTER, layout::ARRAY_RADIUS, layout::ARRAY_MICS).unwrap();
    let scene = Scene {
        room,
        array,
        sources: vec![layout::POSITION_A],
        rir: RirOptions::default(),
    };
    let direct = Scene {
        rir: RirOptions {
            max_order: Some(0),
            ..RirOptions::default()
        },
        ..scene.clone()
    };
    // 1000 frames of 128 samples
    let len = 999 * 128 + 512;
    let mut s = synthesize_utterance(1, 5.0, 16000, Voice::MALE);
    s.extend(synthesize_utterance(2, 5.0, 16000, Voice::MALE));
    s.truncate(len);
    let x = render_static(&scene, &[s.clone()], 16000).unwrap();
    let clean = render_static(&direct, &[s], 16000).unwrap().remove(0);
    let t = analyze(&x, &StftConfig::default()).unwrap();
    assert_eq!(t.frames(), 1000);
    let online = run_online(&t, &OnlineConfig::default()).unwrap();
    let batch = run_rtf_mclp(&t, &BatchConfig::default()).unwrap();
    let tail = 900 * 128;
    let f_on = fwsnr(&clean[tail..], &online.waveform[tail..], 16000).unwrap().0;
    let f_b = fwsnr(&clean[tail..], &batch.waveform[tail..], 16000).unwrap().0;
    assert!((f_on - f_b).abs() <= 2.0, "online {f_on:.2} dB, batch {f_b:.2} dB");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sigma_stays_hermitian_psd(seed in 0u64..10_000, steps in 50usize..300) {
        let mut r = rng(seed);
        let mut s = state(2, 3, 1e-3);
        for _ in 0..steps {
            let phi = cvec(&mut r, 6);
            let x = cvec(&mut r, 2);
            kalman_predict(&mut s);
            s.prev_mu = s.mu.clone();
            kalman_update(&mut s, &x, &phi, 0.5);
            update_innovation_cov(&mut s, 1e-6);
        }
        prop_assert!(s.sigma.hermiticity_error() < 1e-12);
        let (min, max) = sigma_min_eig(&s.sigma);
        prop_assert!(min >= -1e-10 * max);
        prop_assert!(s.lambda.iter().all(|l| *l >= 1e-6));
    }

    #[test]
    fn online_constraint_holds_with_estimated_rtf(seed in 0u64..10_000) {
        let t = random_tensor(30, 9, 2, seed);
        let mut engine = OnlineDereverb::new(*t.config(), 2, small_online()).unwrap();
        for n in 0..30 {
            engine.process_frame(t.frame(n)).unwrap();
            for s in engine.states() {
                prop_assert_eq!(s.a[0], c(1.0, 0.0));
                prop_assert!(distortion_error(&s.w, &s.a) <= 1e-10);
            }
        }
    }
}
