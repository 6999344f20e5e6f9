//! Losses, Adam, the deterministic epoch loop and MAE evaluation.

mod adam;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use loss::{log_cosh, loss_and_grad, LossId};

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{validate_fractions, LabeledExample, Split, SplitManifest};
use crate::models::{build_model, ArchitectureId, Model, TaskId};
use crate::nn::{Mode, Tensor1D};
use crate::rng::SplitMix64;
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Free-form dataset label recorded with the model.
    pub dataset: String,
    pub task: TaskId,
    pub arch: ArchitectureId,
    pub loss: LossId,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub fractions: [f64; 3],
    pub seed: u64,
    pub window_s: f64,
    pub hop_s: f64,
    pub exec: Exec,
}

impl TrainingConfig {
    pub fn new(dataset: impl Into<String>, task: TaskId, arch: ArchitectureId, loss: LossId) -> Self {
        Self {
            dataset: dataset.into(),
            task,
            arch,
            loss,
            epochs: 125,
            batch_size: 32,
            adam: AdamConfig::default(),
            fractions: [0.8, 0.04, 0.16],
            seed: 1400,
            window_s: 10.0,
            hop_s: 1.0,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if let LossId::Huber { delta } = self.loss {
            LossId::huber(delta)?;
        }
        validate_fractions(self.fractions)
    }

    /// `key=value` lines describing the run, stored in the model file.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let [a, b, c] = self.fractions;
        let _ = writeln!(s, "dataset={}", self.dataset);
        let _ = writeln!(s, "task={}", self.task);
        let _ = writeln!(s, "arch={}", self.arch);
        let _ = writeln!(s, "loss={}", self.loss);
        if let LossId::Huber { delta } = self.loss {
            let _ = writeln!(s, "huber_delta={delta:?}");
        }
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "learning_rate={:?}", self.adam.learning_rate);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "fractions={a:?},{b:?},{c:?}");
        let _ = writeln!(s, "window_s={:?}", self.window_s);
        let _ = writeln!(s, "hop_s={:?}", self.hop_s);
        s
    }
}

/// Examples partitioned by a subject-level split.
#[derive(Debug, Clone, Default)]
pub struct ExampleSplits {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl ExampleSplits {
    /// Routes each example to its subject's split, keeping input order.
    pub fn from_manifest(examples: Vec<LabeledExample>, manifest: &SplitManifest) -> Result<Self> {
        let mut out = Self::default();
        for e in examples {
            match manifest.split_of(&e.subject) {
                Some(Split::Train) => out.train.push(e),
                Some(Split::Val) => out.val.push(e),
                Some(Split::Test) => out.test.push(e),
                None => {
                    return Err(Error::Dataset(format!(
                        "subject {} is not in the split manifest",
                        e.subject
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn get(&self, split: Split) -> &[LabeledExample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// NaN when the validation split is empty.
    pub val_mae: Vec<f64>,
    /// Zero-based epoch whose weights were returned.
    pub best_epoch: usize,
    /// NaN when the test split is empty.
    pub test_mae: f64,
}

/// Standardizes (and band-projects) every window once up front.
pub fn prepare_all(model: &Model, examples: &[LabeledExample], exec: Exec) -> Result<Vec<Tensor1D>> {
    exec.map(examples, |e| model.prepare(&e.window)).into_iter().collect()
}

/// Mean absolute error of already computed predictions.
pub fn mean_absolute_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "MAE needs equal non-empty inputs, got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

/// Mean over examples of `|predict - target|`.
pub fn evaluate(model: &Model, examples: &[LabeledExample], exec: Exec) -> Result<f64> {
    let inputs = prepare_all(model, examples, exec)?;
    let targets: Vec<f64> = examples.iter().map(|e| e.target).collect();
    mean_absolute_error(&model.predict_many(&inputs, exec)?, &targets)
}

fn evaluate_prepared(model: &Model, inputs: &[Tensor1D], targets: &[f64], exec: Exec) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    mean_absolute_error(&model.predict_many(inputs, exec)?, targets)
}

/// Population mean and standard deviation of the targets, used as the
/// model's output map. A degenerate spread falls back to a unit scale.
fn target_affine(targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let std = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    (if std > 1e-8 { std } else { 1.0 }, mean)
}

/// One pass of mini-batch Adam over a fixed order. Returns the summed loss.
fn run_epoch(
    model: &mut Model,
    adam: &mut Adam,
    params: &mut [f64],
    config: &TrainingConfig,
    inputs: &[Tensor1D],
    targets: &[f64],
    order: &[usize],
    epoch: usize,
) -> Result<f64> {
    let (scale, offset) = model.output_affine();
    let mut total = 0.0;
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        let xs: Vec<Tensor1D> = batch.iter().map(|&i| inputs[i].clone()).collect();
        let (outs, tape) = model.net().forward_batch(&xs, Mode::Train, config.exec)?;
        let n = batch.len() as f64;
        let mut batch_loss = 0.0;
        let mut dys = Vec::with_capacity(batch.len());
        for (out, &i) in outs.iter().zip(batch) {
            let raw = out.values()[0];
            let pred = scale * raw + offset;
            if !pred.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
            let (l, g) = loss_and_grad(config.loss, pred, targets[i])?;
            batch_loss += l;
            dys.push(Tensor1D::new(1, 1, vec![g * scale / n])?);
        }
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: b,
                loss: batch_loss / n,
            });
        }
        total += batch_loss;
        let (_, grads) = model.net().backward(&tape, &dys, config.exec)?;
        adam.step(params, &grads);
        let net = model.net_mut();
        net.set_params(params)?;
        net.update_running_stats(&tape);
    }
    Ok(total)
}

/// Trains a fresh model and returns the weights with the best validation
/// MAE (the last epoch's when there is no validation data).
///
/// Epoch `e` visits the training examples in the order produced by a
/// Fisher-Yates shuffle driven by `SplitMix64::derive(seed, e)`.
pub fn train(config: &TrainingConfig, splits: &ExampleSplits) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let input_len = splits.train[0].window.first().map_or(0, Vec::len);
    let mut model = build_model(config.arch, config.task, input_len, config.seed)?;
    model.set_metadata(config.metadata());

    let exec = config.exec;
    let inputs = prepare_all(&model, &splits.train, exec)?;
    let targets: Vec<f64> = splits.train.iter().map(|e| e.target).collect();
    let val_inputs = prepare_all(&model, &splits.val, exec)?;
    let val_targets: Vec<f64> = splits.val.iter().map(|e| e.target).collect();

    let (scale, offset) = target_affine(&targets);
    model.set_output_affine(scale, offset)?;

    let mut params = model.net().params();
    let mut adam = Adam::new(params.len(), config.adam);
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_mae: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        test_mae: f64::NAN,
    };
    let mut best: Option<(f64, Model)> = None;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        SplitMix64::derive(config.seed, epoch as u64).shuffle(&mut order);
        let total = run_epoch(
            &mut model,
            &mut adam,
            &mut params,
            config,
            &inputs,
            &targets,
            &order,
            epoch,
        )?;
        history.train_loss.push(total / inputs.len() as f64);

        let val = evaluate_prepared(&model, &val_inputs, &val_targets, exec)?;
        history.val_mae.push(val);
        let improved = match &best {
            None => true,
            Some((b, _)) => val < *b || val.is_nan(),
        };
        if improved {
            history.best_epoch = epoch;
            best = Some((val, model.clone()));
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    if !splits.test.is_empty() {
        history.test_mae = evaluate(&best_model, &splits.test, exec)?;
    }
    Ok((best_model, history))
}

/// `epoch,train_loss,val_mae` rows (one-based epochs) and a
/// `test_mae=<float>` trailer.
pub fn format_history(h: &TrainHistory) -> String {
    let mut s = String::from("epoch,train_loss,val_mae\n");
    for (i, (l, v)) in h.train_loss.iter().zip(&h.val_mae).enumerate() {
        let _ = writeln!(s, "{},{l:?},{v:?}", i + 1);
    }
    let _ = writeln!(s, "test_mae={:?}", h.test_mae);
    s
}

pub fn parse_history(text: &str, path: &Path) -> Result<TrainHistory> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,train_loss,val_mae")) => {}
        _ => return Err(err(1, "missing history header".into())),
    }
    let mut train_loss = Vec::new();
    let mut val_mae = Vec::new();
    let mut test_mae = None;
    for (i, line) in lines {
        if let Some(v) = line.strip_prefix("test_mae=") {
            test_mae = Some(v.parse().map_err(|_| err(i + 1, format!("bad test MAE {v:?}")))?);
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [epoch, loss, val] = fields[..] else {
            return Err(err(i + 1, format!("expected 3 fields in {line:?}")));
        };
        if epoch.parse::<usize>().ok() != Some(train_loss.len() + 1) {
            return Err(err(i + 1, format!("epoch {epoch:?} out of sequence")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, format!("bad number {s:?}")));
        train_loss.push(num(loss)?);
        val_mae.push(num(val)?);
    }
    let test_mae = test_mae.ok_or_else(|| err(text.lines().count(), "missing test_mae trailer".into()))?;
    let best_epoch = val_mae
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, &v)| match best {
            Some((_, b)) if !(v < b || v.is_nan()) => best,
            _ => Some((i, v)),
        })
        .map_or(0, |(i, _)| i);
    Ok(TrainHistory {
        train_loss,
        val_mae,
        best_epoch,
        test_mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SYNTH_HR_RANGE, SYNTH_NOISE};

    fn splits(n: usize, seed: u64) -> ExampleSplits {
        let all = synth_dataset(n, seed, SYNTH_HR_RANGE, SYNTH_NOISE).unwrap();
        let (a, rest) = all.split_at(n * 3 / 5);
        let (b, c) = rest.split_at(rest.len() / 2);
        ExampleSplits {
            train: a.to_vec(),
            val: b.to_vec(),
            test: c.to_vec(),
        }
    }

    #[test]
    fn mae_oracle() {
        assert_eq!(mean_absolute_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mean_absolute_error(&[2.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(mean_absolute_error(&[], &[]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let mut cfg = TrainingConfig::new("synthetic", TaskId::Hr, ArchitectureId::Fcn, LossId::Mse);
        cfg.epochs = 1;
        cfg.adam.learning_rate = 0.0;
        let (model, h) = train(&cfg, &splits(40, 1)).unwrap();
        let init = build_model(ArchitectureId::Fcn, TaskId::Hr, 300, cfg.seed).unwrap();
        assert_eq!(model.net().params(), init.net().params());
        assert_eq!(h.train_loss.len(), 1);
    }

    #[test]
    fn deterministic_runs_and_exec_modes() {
        let data = splits(48, 2);
        let mut cfg = TrainingConfig::new("synthetic", TaskId::Hr, ArchitectureId::Base, LossId::LogCosh);
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.exec = Exec::Sequential;
        let (m1, h1) = train(&cfg, &data).unwrap();
        cfg.exec = Exec::Parallel;
        let (m2, h2) = train(&cfg, &data).unwrap();
        assert_eq!(crate::models::write_model(&m1), crate::models::write_model(&m2));
        assert_eq!(format_history(&h1), format_history(&h2));
    }

    #[test]
    fn history_round_trip() {
        let h = TrainHistory {
            train_loss: vec![3.5, 1.25, 0.1],
            val_mae: vec![2.0, 0.5, 0.75],
            best_epoch: 1,
            test_mae: 0.625,
        };
        let text = format_history(&h);
        assert!(text.ends_with("test_mae=0.625\n"));
        assert_eq!(parse_history(&text, Path::new("h")).unwrap(), h);
        assert!(parse_history("epoch,train_loss,val_mae\n1,2,3\n", Path::new("h")).is_err());
    }

    #[test]
    fn empty_train_split_rejected() {
        let cfg = TrainingConfig::new("synthetic", TaskId::Hr, ArchitectureId::Fcn, LossId::Mse);
        assert!(train(&cfg, &ExampleSplits::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = TrainingConfig::new("synthetic", TaskId::Hr, ArchitectureId::Fcn, LossId::Mse);
        cfg.epochs = 3;
        cfg.adam.learning_rate = 1e300;
        match train(&cfg, &splits(20, 3)) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
