//! 1D layers with exact reverse-mode gradients.
//!
//! There is no batch dimension in [`Tensor1D`]; a mini-batch is a slice of
//! tensors. Every layer except batch-norm treats examples independently.
//! Parameter gradients are summed over the batch in example order.

mod gradcheck;
mod layers;
mod sequential;

pub use gradcheck::{check_network, grad_check, grad_check_with, relative_error, GradCheckReport};
pub use layers::{BatchNorm1d, Conv1d, Dense, Layer, LayerKind, MaxPool1d, Padding, ResidualBlock};
pub use sequential::{GradTape, Sequential};

use crate::{Error, Result};

/// Channel-major activations: `values[c * length + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    channels: usize,
    length: usize,
    values: Vec<f64>,
}

impl Tensor1D {
    pub fn new(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * length {
            return Err(Error::shape(format!(
                "{channels}x{length} tensor needs {} values, got {}",
                channels * length,
                values.len()
            )));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            values: vec![0.0; channels * length],
        }
    }

    pub fn from_channels(rows: &[Vec<f64>]) -> Result<Self> {
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::shape("channels have unequal lengths"));
        }
        Ok(Self {
            channels: rows.len(),
            length,
            values: rows.concat(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.length..(c + 1) * self.length]
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            length: self.length,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Batch-norm behaviour; every other layer ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
