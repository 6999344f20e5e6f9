//! Second implementations of the forward math, written as plainly as
//! possible, compared against the library.

#[path = "support/oracle.rs"]
mod oracle;

use oracle::*;
use vitals_core::models::{ArchitectureId, TaskId, WINDOW_LEN};
use vitals_core::nn::{Conv1d, Padding, Tensor1D};
use vitals_core::rng::SplitMix64;
use vitals_core::signal::{band_mask_indices, dct2_forward, dct2_inverse};

#[test]
fn conv1d_matches_triple_loop_on_200_draws() {
    let mut rng = SplitMix64::new(20);
    for draw in 0..200 {
        let cin = 1 + rng.below(5);
        let cout = 1 + rng.below(8);
        let (padding, k) = if draw % 2 == 0 {
            (Padding::Same, 1 + 2 * rng.below(4))
        } else {
            (Padding::Valid, 1 + rng.below(7))
        };
        let stride = 1 + rng.below(3);
        let len = k + rng.below(40);
        let mut conv = Conv1d::new(cin, cout, k, stride, padding).unwrap();
        conv.weight.iter_mut().for_each(|w| *w = rng.uniform(-1.0, 1.0));
        conv.bias.iter_mut().for_each(|b| *b = rng.uniform(-1.0, 1.0));
        let x = random_rows(&mut rng, cin, len);
        let got = rows(&conv.forward(&Tensor1D::from_channels(&x).unwrap()).unwrap());
        let pad = if padding == Padding::Same { (k - 1) / 2 } else { 0 };
        let want = naive_conv(&conv.weight, &conv.bias, cin, k, stride, pad, &x);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
            assert!(close(*g, *w, 1e-12), "draw {draw}: {g} vs {w}");
        }
    }
}

#[test]
fn conv_three_to_eight_same_padding() {
    let mut rng = SplitMix64::new(3);
    let mut conv = Conv1d::new(3, 8, 5, 1, Padding::Same).unwrap();
    conv.weight.iter_mut().for_each(|w| *w = rng.normal());
    conv.bias.iter_mut().for_each(|b| *b = rng.normal());
    let x = random_rows(&mut rng, 3, 50);
    let got = rows(&conv.forward(&Tensor1D::from_channels(&x).unwrap()).unwrap());
    let want = naive_conv(&conv.weight, &conv.bias, 3, 5, 1, 2, &x);
    for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
        assert!(close(*g, *w, 1e-12));
    }
}

#[test]
fn predict_matches_independent_forward_on_100_models() {
    let mut rng = SplitMix64::new(1234);
    for i in 0..100 {
        let arch = ArchitectureId::ALL[i % 4];
        let task = if i % 8 < 4 { TaskId::Hr } else { TaskId::Spo2 };
        let model = random_model(&mut rng, arch, task);
        let window: Rows = (0..task.input_channels())
            .map(|_| (0..WINDOW_LEN).map(|_| rng.uniform(0.0, 255.0)).collect())
            .collect();
        let got = model.predict(&window).unwrap();
        let want = oracle_forward(&model, &window);
        assert!(close(got, want, 1e-12), "model {i} ({arch}, {task}): {got} vs {want}");
    }
}

#[test]
fn dct_round_trip_and_parseval_on_1000_signals() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..300).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let big = dct2_forward(&x).unwrap();
        let back = dct2_inverse(&big).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm(&x) - norm(&big)).abs() < 1e-9);
    }
}

#[test]
fn dct_matches_direct_sum() {
    let mut rng = SplitMix64::new(5);
    for n in [1, 2, 7, 64, 300] {
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        for (a, b) in dct2_forward(&x).unwrap().iter().zip(naive_dct(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn heart_rate_band_indices() {
    assert_eq!(band_mask_indices(300, 30.0, 0.7, 4.0).unwrap(), [14, 80]);
    assert_eq!(band_mask_indices(1000, 125.0, 0.7, 4.0).unwrap(), [12, 64]);
}
