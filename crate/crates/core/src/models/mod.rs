//! The four vital-sign architectures and their shared prediction path.
//!
//! Every model standardizes each input channel to zero mean and unit
//! variance before its layer stack, so predictions are invariant to
//! positive affine changes of the raw PPG. The DCT architecture then
//! projects each channel onto the heart-rate band of its DCT-II spectrum.

mod format;

pub use format::{load_model, read_model, save_model, write_model, MAGIC, VERSION};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::nn::{BatchNorm1d, Conv1d, Dense, Layer, MaxPool1d, Padding, ResidualBlock, Sequential, Tensor1D};
use crate::rng::SplitMix64;
use crate::signal::{standardize, BandMask, Dct2};
use crate::{Error, Exec, Result};

/// Camera frame rate the models are built for.
pub const SAMPLE_RATE_HZ: f64 = 30.0;
/// 10 s windows at 30 Hz.
pub const WINDOW_LEN: usize = 300;
/// Heart-rate band kept by the DCT model (42-240 bpm).
pub const HR_BAND_HZ: (f64, f64) = (0.7, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchitectureId {
    Base,
    Fcn,
    ResidualFcn,
    Dct,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 4] = [
        ArchitectureId::Base,
        ArchitectureId::Fcn,
        ArchitectureId::ResidualFcn,
        ArchitectureId::Dct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureId::Base => "base",
            ArchitectureId::Fcn => "fcn",
            ArchitectureId::ResidualFcn => "residual_fcn",
            ArchitectureId::Dct => "dct",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture {s:?} (base, fcn, residual_fcn, dct)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskId {
    Hr,
    Spo2,
}

impl TaskId {
    pub const ALL: [TaskId; 2] = [TaskId::Hr, TaskId::Spo2];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Hr => "hr",
            TaskId::Spo2 => "spo2",
        }
    }

    /// Heart rate reads the red channel only; SpO2 reads red, green, blue.
    pub fn input_channels(self) -> usize {
        match self {
            TaskId::Hr => 1,
            TaskId::Spo2 => 3,
        }
    }

    /// Physiologically plausible label range (inclusive).
    pub fn valid_range(self) -> (f64, f64) {
        match self {
            TaskId::Hr => (30.0, 240.0),
            TaskId::Spo2 => (70.0, 100.0),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TaskId::Hr => "bpm",
            TaskId::Spo2 => "%",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?} (hr, spo2)")))
    }
}

/// A trainable vital-sign estimator.
///
/// The network output is mapped to physical units by a fixed affine map
/// `estimate = scale * output + offset`; training sets it from the training
/// targets so the layers only have to produce standardized values.
#[derive(Debug, Clone)]
pub struct Model {
    arch: ArchitectureId,
    task: TaskId,
    input_len: usize,
    sample_rate_hz: f64,
    band: Option<BandMask>,
    net: Sequential,
    output_offset: f64,
    output_scale: f64,
    metadata: String,
    dct: Option<Arc<Dct2>>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.task == other.task
            && self.input_len == other.input_len
            && self.sample_rate_hz.to_bits() == other.sample_rate_hz.to_bits()
            && self.band == other.band
            && self.net == other.net
            && self.output_offset.to_bits() == other.output_offset.to_bits()
            && self.output_scale.to_bits() == other.output_scale.to_bits()
            && self.metadata == other.metadata
    }
}

fn conv(i: usize, o: usize, k: usize) -> Result<Layer> {
    Ok(Layer::Conv1d(Conv1d::new(i, o, k, 1, Padding::Same)?))
}

fn head(i: usize) -> Result<Layer> {
    Ok(Layer::Conv1d(Conv1d::new(i, 1, 1, 1, Padding::Valid)?))
}

fn pool() -> Layer {
    Layer::MaxPool(MaxPool1d { width: 2, stride: 2 })
}

fn base_layers(channels: usize, len: usize) -> Result<Vec<Layer>> {
    let flat = 32 * (len / 8);
    Ok(vec![
        conv(channels, 16, 7)?,
        Layer::BatchNorm(BatchNorm1d::new(16)),
        Layer::Relu,
        pool(),
        conv(16, 32, 5)?,
        Layer::BatchNorm(BatchNorm1d::new(32)),
        Layer::Relu,
        pool(),
        conv(32, 32, 3)?,
        Layer::BatchNorm(BatchNorm1d::new(32)),
        Layer::Relu,
        pool(),
        Layer::Dense(Dense::new(flat, 64)?),
        Layer::Relu,
        Layer::Dense(Dense::new(64, 1)?),
    ])
}

fn fcn_layers(channels: usize) -> Result<Vec<Layer>> {
    Ok(vec![
        conv(channels, 16, 7)?,
        Layer::Relu,
        pool(),
        conv(16, 32, 5)?,
        Layer::Relu,
        pool(),
        conv(32, 32, 5)?,
        Layer::Relu,
        pool(),
        conv(32, 64, 3)?,
        Layer::Relu,
        head(64)?,
        Layer::Gap,
    ])
}

fn residual_fcn_layers(channels: usize) -> Result<Vec<Layer>> {
    Ok(vec![
        conv(channels, 32, 7)?,
        Layer::Relu,
        Layer::Residual(ResidualBlock::new(32, 3)?),
        pool(),
        Layer::Residual(ResidualBlock::new(32, 3)?),
        pool(),
        Layer::Residual(ResidualBlock::new(32, 3)?),
        head(32)?,
        Layer::Gap,
    ])
}

fn dct_layers(channels: usize) -> Result<Vec<Layer>> {
    Ok(vec![
        conv(channels, 16, 5)?,
        Layer::Relu,
        conv(16, 32, 3)?,
        Layer::Relu,
        head(32)?,
        Layer::Gap,
    ])
}

/// Builds an architecture with He-uniform weights drawn from
/// `SplitMix64(init_seed)` in layer order.
pub fn build_model(arch: ArchitectureId, task: TaskId, input_len: usize, init_seed: u64) -> Result<Model> {
    let channels = task.input_channels();
    let (band, layers) = match arch {
        ArchitectureId::Base => (None, base_layers(channels, input_len)?),
        ArchitectureId::Fcn => (None, fcn_layers(channels)?),
        ArchitectureId::ResidualFcn => (None, residual_fcn_layers(channels)?),
        ArchitectureId::Dct => {
            let band = BandMask::new(input_len, SAMPLE_RATE_HZ, HR_BAND_HZ.0, HR_BAND_HZ.1)?;
            (Some(band), dct_layers(channels)?)
        }
    };
    let mut net = Sequential::new(layers);
    net.init_he(&mut SplitMix64::new(init_seed));
    Model::from_parts(arch, task, input_len, SAMPLE_RATE_HZ, band, net)
}

impl Model {
    /// Assembles a model and validates that its layers reduce
    /// `(channels, conv input length)` to a single scalar.
    pub fn from_parts(
        arch: ArchitectureId,
        task: TaskId,
        input_len: usize,
        sample_rate_hz: f64,
        band: Option<BandMask>,
        net: Sequential,
    ) -> Result<Model> {
        if (arch == ArchitectureId::Dct) != band.is_some() {
            return Err(Error::invalid("exactly the dct architecture carries a band mask"));
        }
        if input_len < 2 {
            return Err(Error::invalid("model input needs at least 2 samples"));
        }
        let dct = match band {
            Some(b) => {
                if b.k_hi >= input_len {
                    return Err(Error::invalid("band mask exceeds the input length"));
                }
                Some(Arc::new(Dct2::new(input_len)?))
            }
            None => None,
        };
        let model = Model {
            arch,
            task,
            input_len,
            sample_rate_hz,
            band,
            net,
            output_offset: 0.0,
            output_scale: 1.0,
            metadata: String::new(),
            dct,
        };
        let out = model.net.output_shape(model.net_input_shape())?;
        if out != (1, 1) {
            return Err(Error::shape(format!(
                "{arch} layers end in a {}x{} tensor, not a scalar",
                out.0, out.1
            )));
        }
        Ok(model)
    }

    pub fn arch(&self) -> ArchitectureId {
        self.arch
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn band(&self) -> Option<&BandMask> {
        self.band.as_ref()
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    /// Shape entering the layer stack (after the optional band crop).
    pub fn net_input_shape(&self) -> (usize, usize) {
        let len = self.band.map_or(self.input_len, |b| b.width());
        (self.task.input_channels(), len)
    }

    pub fn output_affine(&self) -> (f64, f64) {
        (self.output_scale, self.output_offset)
    }

    pub fn set_output_affine(&mut self, scale: f64, offset: f64) -> Result<()> {
        if !(scale.is_finite() && scale != 0.0 && offset.is_finite()) {
            return Err(Error::invalid(format!(
                "output map needs finite non-zero scale, got scale {scale}, offset {offset}"
            )));
        }
        self.output_scale = scale;
        self.output_offset = offset;
        Ok(())
    }

    /// Free-form `key=value` lines recorded with the model (run settings).
    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    pub fn set_metadata(&mut self, text: impl Into<String>) {
        self.metadata = text.into();
    }

    /// Trainable parameter count (batch-norm running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.net.num_params()
    }

    /// Standardizes each channel and, for the DCT architecture, keeps the
    /// band-limited DCT-II coefficients. `window` holds one slice per
    /// model input channel.
    pub fn prepare(&self, window: &[Vec<f64>]) -> Result<Tensor1D> {
        let channels = self.task.input_channels();
        if window.len() != channels {
            return Err(Error::shape(format!(
                "{} model expects {channels} channel(s), got {}",
                self.task,
                window.len()
            )));
        }
        let mut rows = Vec::with_capacity(channels);
        for ch in window {
            if ch.len() != self.input_len {
                return Err(Error::shape(format!(
                    "model expects {} samples per window, got {}",
                    self.input_len,
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("window contains non-finite samples"));
            }
            let z = standardize(ch)?;
            rows.push(match (&self.dct, &self.band) {
                (Some(plan), Some(b)) => plan.forward_range(&z, b.k_lo, b.k_hi),
                _ => z,
            });
        }
        Tensor1D::from_channels(&rows)
    }

    /// Physical-unit estimate for an already prepared input.
    pub fn predict_prepared(&self, x: &Tensor1D) -> Result<f64> {
        let y = self.net.forward(x)?;
        Ok(self.to_units(y.values()[0]))
    }

    pub fn predict(&self, window: &[Vec<f64>]) -> Result<f64> {
        self.predict_prepared(&self.prepare(window)?)
    }

    pub fn predict_many(&self, inputs: &[Tensor1D], exec: Exec) -> Result<Vec<f64>> {
        exec.map(inputs, |x| self.predict_prepared(x)).into_iter().collect()
    }

    pub(crate) fn to_units(&self, raw: f64) -> f64 {
        self.output_scale * raw + self.output_offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_window(channels: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..channels)
            .map(|_| (0..WINDOW_LEN).map(|_| rng.uniform(50.0, 200.0)).collect())
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for a in ArchitectureId::ALL {
            assert_eq!(a.name().parse::<ArchitectureId>().unwrap(), a);
        }
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
        }
        assert!("lstm".parse::<ArchitectureId>().is_err());
        assert!("rr".parse::<TaskId>().is_err());
    }

    #[test]
    fn every_architecture_chains_to_scalar() {
        for arch in ArchitectureId::ALL {
            for task in TaskId::ALL {
                let m = build_model(arch, task, WINDOW_LEN, 1).unwrap();
                assert_eq!(m.net.output_shape(m.net_input_shape()).unwrap(), (1, 1));
                assert_eq!(m.net_input_shape().0, task.input_channels());
            }
        }
    }

    #[test]
    fn fcn_shape_contract() {
        let m = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 9).unwrap();
        match &m.net.layers()[0] {
            Layer::Conv1d(c) => assert_eq!(c.in_channels, 1),
            other => panic!("first layer {other:?}"),
        }
        assert_eq!(m.net.layers().last(), Some(&Layer::Gap));
    }

    #[test]
    fn dct_conv_input_is_band_width() {
        let m = build_model(ArchitectureId::Dct, TaskId::Hr, WINDOW_LEN, 3).unwrap();
        let b = m.band().unwrap();
        assert_eq!((b.k_lo, b.k_hi), (14, 80));
        assert_eq!(m.net_input_shape(), (1, 67));
        assert!(build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 3)
            .unwrap()
            .band()
            .is_none());
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_model(ArchitectureId::Base, TaskId::Spo2, WINDOW_LEN, 42).unwrap();
        let b = build_model(ArchitectureId::Base, TaskId::Spo2, WINDOW_LEN, 42).unwrap();
        let pa: Vec<u64> = a.net.params().iter().map(|v| v.to_bits()).collect();
        let pb: Vec<u64> = b.net.params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(pa, pb);
        let c = build_model(ArchitectureId::Base, TaskId::Spo2, WINDOW_LEN, 43).unwrap();
        assert_ne!(a.net.params(), c.net.params());
    }

    #[test]
    fn he_uniform_bounds_and_zero_bias() {
        let m = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 5).unwrap();
        for layer in m.net.layers() {
            if let Layer::Conv1d(c) = layer {
                let bound = (6.0 / (c.in_channels * c.kernel) as f64).sqrt();
                assert!(c.weight.iter().all(|w| w.abs() <= bound));
                assert!(c.bias.iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn param_counts_closed_form() {
        let base = build_model(ArchitectureId::Base, TaskId::Hr, WINDOW_LEN, 0).unwrap();
        let fcn = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 0).unwrap();
        let base_expected =
            (16 * 7 + 16) + 32 + (32 * 16 * 5 + 32) + 64 + (32 * 32 * 3 + 32) + 64 + (32 * 37 * 64 + 64) + (64 + 1);
        let fcn_expected = (16 * 7 + 16) + (32 * 16 * 5 + 32) + (32 * 32 * 5 + 32) + (64 * 32 * 3 + 64) + (64 + 1);
        assert_eq!(base.param_count(), base_expected);
        assert_eq!(fcn.param_count(), fcn_expected);
        assert!(base.param_count() as f64 / fcn.param_count() as f64 >= 3.5);
        assert_eq!(base.param_count(), base.net.params().len());
    }

    #[test]
    fn constant_window_is_deterministic_constant() {
        let m = build_model(ArchitectureId::ResidualFcn, TaskId::Hr, WINDOW_LEN, 2).unwrap();
        let flat = vec![vec![123.0; WINDOW_LEN]];
        let zero = Tensor1D::zeros(1, WINDOW_LEN);
        assert_eq!(m.predict(&flat).unwrap(), m.predict_prepared(&zero).unwrap());
    }

    #[test]
    fn affine_invariance() {
        for arch in ArchitectureId::ALL {
            let m = build_model(arch, TaskId::Spo2, WINDOW_LEN, 77).unwrap();
            let w = random_window(3, 8);
            let shifted: Vec<Vec<f64>> = w.iter().map(|c| c.iter().map(|v| 3.5 * v - 40.0).collect()).collect();
            let a = m.predict(&w).unwrap();
            let b = m.predict(&shifted).unwrap();
            assert!((a - b).abs() < 1e-9, "{arch}: {a} vs {b}");
        }
    }

    #[test]
    fn predict_rejects_bad_windows() {
        let m = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 2).unwrap();
        assert!(matches!(m.predict(&random_window(3, 1)), Err(Error::Shape(_))));
        assert!(matches!(m.predict(&[vec![0.0; 299]]), Err(Error::Shape(_))));
        let mut w = random_window(1, 1);
        w[0][10] = f64::NAN;
        assert!(matches!(m.predict(&w), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn output_affine_applies() {
        let mut m = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 2).unwrap();
        let w = random_window(1, 4);
        let raw = m.predict(&w).unwrap();
        m.set_output_affine(20.0, 100.0).unwrap();
        assert!((m.predict(&w).unwrap() - (20.0 * raw + 100.0)).abs() < 1e-12);
        assert!(m.set_output_affine(0.0, 1.0).is_err());
    }
}
