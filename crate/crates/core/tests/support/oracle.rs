//! Plain second implementations of the forward math.

use std::f64::consts::PI;

use vitals_core::models::{build_model, ArchitectureId, Model, TaskId, WINDOW_LEN};
use vitals_core::nn::{Conv1d, Layer, Padding, Tensor1D};
use vitals_core::rng::SplitMix64;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(t: &Tensor1D) -> Rows {
    (0..t.channels()).map(|c| t.channel(c).to_vec()).collect()
}

pub fn naive_conv(w: &[f64], b: &[f64], cin: usize, k: usize, stride: usize, pad: usize, x: &Rows) -> Rows {
    let cout = b.len();
    let len = x[0].len();
    let out_len = (len + 2 * pad - k) / stride + 1;
    let mut out = vec![vec![0.0; out_len]; cout];
    for c in 0..cout {
        for t in 0..out_len {
            let mut acc = b[c];
            for i in 0..cin {
                for tau in 0..k {
                    let p = (t * stride + tau) as isize - pad as isize;
                    if p >= 0 && (p as usize) < len {
                        acc += w[(c * cin + i) * k + tau] * x[i][p as usize];
                    }
                }
            }
            out[c][t] = acc;
        }
    }
    out
}

pub fn random_rows(rng: &mut SplitMix64, channels: usize, len: usize) -> Rows {
    (0..channels)
        .map(|_| (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn naive_standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if std < 1e-8 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

pub fn naive_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            s * (0..n)
                .map(|i| x[i] * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Straight-line forward pass driven only by the public layer fields.
pub fn oracle_forward(model: &Model, window: &[Vec<f64>]) -> f64 {
    let mut x: Rows = window.iter().map(|c| naive_standardize(c)).collect();
    if let Some(band) = model.band() {
        x = x.iter().map(|c| naive_dct(c)[band.k_lo..=band.k_hi].to_vec()).collect();
    }
    let relu = |x: &Rows| -> Rows { x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect() };
    let conv = |c: &Conv1d, x: &Rows| {
        let pad = if c.padding == Padding::Same {
            (c.kernel - 1) / 2
        } else {
            0
        };
        naive_conv(&c.weight, &c.bias, c.in_channels, c.kernel, c.stride, pad, x)
    };
    for layer in model.net().layers() {
        x = match layer {
            Layer::Conv1d(c) => conv(c, &x),
            Layer::Relu => relu(&x),
            Layer::MaxPool(p) => x
                .iter()
                .map(|r| {
                    let n = (r.len() - p.width) / p.stride + 1;
                    (0..n)
                        .map(|t| {
                            r[t * p.stride..t * p.stride + p.width]
                                .iter()
                                .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                        })
                        .collect()
                })
                .collect(),
            Layer::BatchNorm(b) => x
                .iter()
                .enumerate()
                .map(|(c, r)| {
                    let sd = (b.running_var[c] + b.eps).sqrt();
                    r.iter()
                        .map(|v| b.gamma[c] * (v - b.running_mean[c]) / sd + b.beta[c])
                        .collect()
                })
                .collect(),
            Layer::Dense(d) => {
                let flat: Vec<f64> = x.concat();
                (0..d.out_features)
                    .map(|o| {
                        let dot: f64 = (0..d.in_features)
                            .map(|j| d.weight[o * d.in_features + j] * flat[j])
                            .sum();
                        vec![d.bias[o] + dot]
                    })
                    .collect()
            }
            Layer::Gap => x.iter().map(|r| vec![r.iter().sum::<f64>() / r.len() as f64]).collect(),
            Layer::Residual(r) => {
                let a = relu(&conv(&r.conv_a, &x));
                let b = conv(&r.conv_b, &a);
                let sum: Rows = b
                    .iter()
                    .zip(&x)
                    .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u + v).collect())
                    .collect();
                relu(&sum)
            }
        };
    }
    let (scale, offset) = model.output_affine();
    scale * x[0][0] + offset
}

/// He-initialized model with random biases, batch-norm state and output map.
pub fn random_model(rng: &mut SplitMix64, arch: ArchitectureId, task: TaskId) -> Model {
    let mut model = build_model(arch, task, WINDOW_LEN, rng.next_u64()).unwrap();
    let net = model.net_mut();
    let mut params = net.params();
    // perturb every parameter so biases and batch-norm affine terms are non-trivial
    params.iter_mut().for_each(|p| *p += rng.uniform(-0.1, 0.1));
    net.set_params(&params).unwrap();
    for layer in net.layers_mut() {
        if let Layer::BatchNorm(bn) = layer {
            bn.running_mean.iter_mut().for_each(|m| *m = rng.uniform(-0.2, 0.2));
            bn.running_var.iter_mut().for_each(|v| *v = rng.uniform(0.5, 1.5));
        }
    }
    model
        .set_output_affine(rng.uniform(1.0, 30.0), rng.uniform(-100.0, 100.0))
        .unwrap();
    model
}
