mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use rtf_mclp::stft::{analyze, synthesize, StftConfig};

fn noise(seed: u64, mics: usize, len: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..mics).map(|_| (0..len).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

fn interior_snr_db(x: &[f64], y: &[f64], margin: usize) -> f64 {
    let (mut s, mut e) = (0.0, 0.0);
    for t in margin..x.len() - margin {
        s += x[t] * x[t];
        e += (x[t] - y[t]).powi(2);
    }
    10.0 * (s / e.max(f64::MIN_POSITIVE)).log10()
}

#[test]
fn ten_multichannel_round_trips() {
    let cfg = StftConfig::default();
    for seed in 0..10 {
        let x = noise(seed, 4, 8000 + 37 * seed as usize);
        let y = synthesize(&analyze(&x, &cfg).unwrap());
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a.len(), b.len());
            assert!(interior_snr_db(a, b, cfg.window_len) >= 60.0);
        }
    }
}

#[test]
fn speech_round_trip() {
    let cfg = StftConfig::default();
    let s = rtf_mclp::speech::synthesize_utterance(3, 2.0, cfg.sample_rate, rtf_mclp::speech::Voice::FEMALE);
    let y = synthesize(&analyze(&[s.clone()], &cfg).unwrap());
    assert!(interior_snr_db(&s, &y[0], cfg.window_len) >= 60.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analysis_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let cfg = StftConfig::default();
        let x = noise(seed, 2, 2000);
        let y = noise(seed ^ 1, 2, 2000);
        let mix: Vec<Vec<f64>> = x.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(u, v)| alpha * u + beta * v).collect()).collect();
        let tx = analyze(&x, &cfg).unwrap();
        let ty = analyze(&y, &cfg).unwrap();
        let tm = analyze(&mix, &cfg).unwrap();
        let err = tm.as_slice().iter().zip(tx.as_slice()).zip(ty.as_slice())
            .map(|((m, a), b)| (m - (a * alpha + b * beta)).norm())
            .fold(0.0, f64::max);
        prop_assert!(err <= 1e-10);
    }

    #[test]
    fn round_trip_for_arbitrary_length(seed in any::<u64>(), len in 1024usize..5000, mics in 1usize..4) {
        let cfg = StftConfig::default();
        let x = noise(seed, mics, len);
        let y = synthesize(&analyze(&x, &cfg).unwrap());
        for (a, b) in x.iter().zip(&y) {
            prop_assert!(interior_snr_db(a, b, cfg.window_len) >= 60.0);
        }
    }
}
