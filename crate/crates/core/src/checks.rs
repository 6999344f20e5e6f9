//! Finite-difference verification of every layer type, every loss and a
//! complete FCN, as run by the `gradcheck` command.
//!
//! Layer checks use `h = 1e-5` and tolerance `1e-5` with inputs in
//! `[-1, 1]`; ReLU inputs and max-pool window gaps are kept at least `1e-3`
//! away from their kinks. Loss checks sweep `e` over `[-10, 10]` with
//! tolerance `1e-8`, skipping `|e - kink| < 1e-3`.

use crate::models::{build_model, ArchitectureId, TaskId};
use crate::nn::{
    check_network, grad_check, BatchNorm1d, Conv1d, Dense, GradCheckReport, Layer, MaxPool1d, Mode, Padding,
    ResidualBlock, Sequential, Tensor1D,
};
use crate::rng::SplitMix64;
use crate::train::{loss_and_grad, LossId};
use crate::Result;

pub const STEP: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-5;
pub const LOSS_TOLERANCE: f64 = 1e-8;
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl CheckItem {
    pub fn passed(&self) -> bool {
        self.report.passed(self.tolerance)
    }
}

fn uniform_tensor(rng: &mut SplitMix64, channels: usize, len: usize) -> Tensor1D {
    let v = (0..channels * len).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor1D::new(channels, len, v).expect("sizes match")
}

/// Values in `[-1, 1]` with `|x| >= KINK_MARGIN`.
fn off_kink_tensor(rng: &mut SplitMix64, channels: usize, len: usize) -> Tensor1D {
    let v = (0..channels * len)
        .map(|_| loop {
            let x = rng.uniform(-1.0, 1.0);
            if x.abs() >= KINK_MARGIN {
                break x;
            }
        })
        .collect();
    Tensor1D::new(channels, len, v).expect("sizes match")
}

/// Values in `[-1, 1]` whose pairs `(2i, 2i + 1)` differ by at least `KINK_MARGIN`.
fn distinct_pairs_tensor(rng: &mut SplitMix64, channels: usize, len: usize) -> Tensor1D {
    let mut v = Vec::with_capacity(channels * len);
    for _ in 0..channels {
        let mut row: Vec<f64> = Vec::with_capacity(len);
        for t in 0..len {
            let x = loop {
                let x = rng.uniform(-1.0, 1.0);
                if t % 2 == 0 || (x - row[t - 1]).abs() >= KINK_MARGIN {
                    break x;
                }
            };
            row.push(x);
        }
        v.extend(row);
    }
    Tensor1D::new(channels, len, v).expect("sizes match")
}

/// `L = sum(r * y) + 0.25 * sum(y^2)` over the batch with fixed random `r`.
fn probe_loss(rng: &mut SplitMix64, shapes: &[(usize, usize)]) -> impl Fn(&[Tensor1D]) -> (f64, Vec<Tensor1D>) + Sync {
    let weights: Vec<Tensor1D> = shapes.iter().map(|&(c, l)| uniform_tensor(rng, c, l)).collect();
    move |ys: &[Tensor1D]| {
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(ys.len());
        for (y, r) in ys.iter().zip(&weights) {
            let mut g = y.clone();
            for ((gv, yv), rv) in g.values_mut().iter_mut().zip(y.values()).zip(r.values()) {
                total += rv * yv + 0.25 * yv * yv;
                *gv = rv + 0.5 * yv;
            }
            grads.push(g);
        }
        (total, grads)
    }
}

fn randomize_params(net: &mut Sequential, rng: &mut SplitMix64) -> Result<()> {
    let p: Vec<f64> = (0..net.num_params()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    net.set_params(&p)
}

fn check_layer(
    name: &str,
    layer: Layer,
    inputs: Vec<Tensor1D>,
    mode: Mode,
    rng: &mut SplitMix64,
    fault: f64,
) -> Result<CheckItem> {
    let mut net = Sequential::new(vec![layer]);
    randomize_params(&mut net, rng)?;
    let shape = net.output_shape(inputs[0].shape())?;
    let loss = probe_loss(rng, &vec![shape; inputs.len()]);
    let (params, input) = check_network(&net, &inputs, mode, &loss, STEP, fault)?;
    Ok(CheckItem {
        name: name.to_owned(),
        report: params.merge(input),
        tolerance: LAYER_TOLERANCE,
    })
}

fn batch(n: usize, mut make: impl FnMut() -> Tensor1D) -> Vec<Tensor1D> {
    (0..n).map(|_| make()).collect()
}

/// One item per layer type (conv1d in two configurations, batch-norm in
/// both modes) plus a complete FCN under log-cosh.
pub fn layer_checks(seed: u64, fault: f64) -> Result<Vec<CheckItem>> {
    let mut rng = SplitMix64::new(seed);
    let r = &mut rng;
    let mut items = Vec::new();

    let x = batch(2, || uniform_tensor(r, 3, 16));
    items.push(check_layer(
        "conv1d",
        Layer::Conv1d(Conv1d::new(3, 4, 5, 1, Padding::Same)?),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    let x = batch(2, || uniform_tensor(r, 2, 17));
    items.push(check_layer(
        "conv1d_strided",
        Layer::Conv1d(Conv1d::new(2, 3, 4, 2, Padding::Valid)?),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    let x = batch(2, || off_kink_tensor(r, 3, 10));
    items.push(check_layer("relu", Layer::Relu, x, Mode::Train, r, fault)?);

    let x = batch(2, || distinct_pairs_tensor(r, 3, 12));
    items.push(check_layer(
        "maxpool",
        Layer::MaxPool(MaxPool1d::new(2, 2)?),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    let x = batch(4, || uniform_tensor(r, 3, 8));
    items.push(check_layer(
        "batchnorm",
        Layer::BatchNorm(BatchNorm1d::new(3)),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    let mut bn = BatchNorm1d::new(3);
    bn.running_mean = vec![0.2, -0.1, 0.05];
    bn.running_var = vec![0.5, 1.5, 0.9];
    let x = batch(2, || uniform_tensor(r, 3, 8));
    items.push(check_layer(
        "batchnorm_infer",
        Layer::BatchNorm(bn),
        x,
        Mode::Infer,
        r,
        fault,
    )?);

    let x = batch(2, || uniform_tensor(r, 3, 4));
    items.push(check_layer(
        "dense",
        Layer::Dense(Dense::new(12, 5)?),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    let x = batch(2, || uniform_tensor(r, 4, 9));
    items.push(check_layer("gap", Layer::Gap, x, Mode::Train, r, fault)?);

    let x = batch(2, || uniform_tensor(r, 4, 12));
    items.push(check_layer(
        "residual",
        Layer::Residual(ResidualBlock::new(4, 3)?),
        x,
        Mode::Train,
        r,
        fault,
    )?);

    items.push(fcn_logcosh_check(r, fault)?);
    Ok(items)
}

/// The shipped FCN (He init) on two short windows with log-cosh against
/// random targets.
fn fcn_logcosh_check(rng: &mut SplitMix64, fault: f64) -> Result<CheckItem> {
    let model = build_model(ArchitectureId::Fcn, TaskId::Hr, 64, rng.next_u64())?;
    let xs = batch(2, || uniform_tensor(rng, 1, 64));
    let targets = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
    let loss = move |ys: &[Tensor1D]| {
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(ys.len());
        for (y, t) in ys.iter().zip(targets) {
            let (l, g) = loss_and_grad(LossId::LogCosh, y.values()[0], t).expect("finite outputs");
            total += l;
            grads.push(Tensor1D::new(1, 1, vec![g]).expect("scalar"));
        }
        (total, grads)
    };
    let (params, input) = check_network(model.net(), &xs, Mode::Train, &loss, STEP, fault)?;
    Ok(CheckItem {
        name: "model_fcn_logcosh".into(),
        report: params.merge(input),
        tolerance: LAYER_TOLERANCE,
    })
}

/// Derivative of each loss in the prediction on a grid over `e in [-10, 10]`.
pub fn loss_checks(fault: f64) -> Vec<CheckItem> {
    LossId::ALL
        .into_iter()
        .map(|loss| {
            let kinks = loss.kinks();
            let points: Vec<f64> = (0..=4000)
                .map(|i| -10.0 + i as f64 * 0.005 + 1.7e-4)
                .filter(|e| *e <= 10.0 && kinks.iter().all(|k| (e - k).abs() >= KINK_MARGIN))
                .collect();
            let mut report = GradCheckReport {
                max_rel_error: 0.0,
                worst_index: 0,
                checked: 0,
            };
            for (i, &e) in points.iter().enumerate() {
                let (_, g) = loss_and_grad(loss, e, 0.0).expect("finite");
                let f = |p: &[f64]| loss_and_grad(loss, p[0], 0.0).expect("finite").0;
                let mut r = grad_check(&[e], &[g * fault], f, STEP);
                r.worst_index = i;
                report = report.merge(r);
            }
            CheckItem {
                name: format!("loss_{}", loss.name()),
                report,
                tolerance: LOSS_TOLERANCE,
            }
        })
        .collect()
}

/// Layer, model and loss checks. `fault` multiplies every analytic
/// gradient (1.0 for a real check, e.g. 1.1 to plant a 10% error).
pub fn gradcheck_suite(fault: f64) -> Result<Vec<CheckItem>> {
    let mut items = layer_checks(0x5EED, fault)?;
    items.extend(loss_checks(fault));
    Ok(items)
}
