//! Vital-sign (heart rate and SpO2) estimation from fingertip PPG signals.
//!
//! The crate is split along the processing pipeline:
//!
//! - [`signal`]: frame averaging, standardization, windowing, resampling and
//!   the orthonormal DCT-II with heart-rate band cropping.
//! - [`nn`]: a small set of 1D layers with exact reverse-mode gradients and a
//!   finite-difference checker.
//! - [`models`]: the four network architectures and the `MTVL` model file.
//! - [`data`]: dataset loaders, subject-level splits, synthetic PPG.
//! - [`train`]: losses, Adam, the epoch loop and MAE evaluation.
//!
//! Batch-level work (per-example forward/backward inside a mini-batch,
//! evaluation sweeps) runs on rayon when the `parallel` feature is enabled.
//! Reductions are always performed in example order, so sequential and
//! parallel execution produce bit-identical results.

pub mod checks;
pub mod data;
mod error;
pub mod exec;
pub mod models;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
