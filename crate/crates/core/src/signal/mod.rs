//! PPG signals: frame averaging, standardization, windowing, resampling and
//! the DCT band filter used by the frequency-domain model.

mod dct;
mod io;

pub use dct::{band_mask_indices, dct2_forward, dct2_inverse, BandMask, Dct2};
pub use io::{read_ppm, read_signal_csv, write_signal_csv};

use crate::{Error, Result};

/// Standard deviations below this are treated as a flat signal.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Uniformly sampled multi-channel time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    sample_rate_hz: f64,
    channels: Vec<Vec<f64>>,
}

impl Signal {
    pub fn new(sample_rate_hz: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::invalid("signal needs at least one channel"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::shape("signal channels have unequal lengths"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal contains non-finite samples"));
        }
        Ok(Self {
            sample_rate_hz,
            channels,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Keeps only the listed channels, in the given order (repeats allowed).
    pub fn select(&self, picks: &[usize]) -> Result<Signal> {
        let mut out = Vec::with_capacity(picks.len());
        for &c in picks {
            let ch = self.channels.get(c).ok_or_else(|| {
                Error::shape(format!(
                    "channel {c} requested from a {}-channel signal",
                    self.num_channels()
                ))
            })?;
            out.push(ch.clone());
        }
        Signal::new(self.sample_rate_hz, out)
    }

    pub fn slice(&self, start: usize, len: usize) -> Signal {
        Signal {
            sample_rate_hz: self.sample_rate_hz,
            channels: self.channels.iter().map(|c| c[start..start + len].to_vec()).collect(),
        }
    }
}

/// One RGB camera frame, row-major pixel triplets.
#[derive(Debug, Clone)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(format!(
                "{width}x{height} frame needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// Mean red, green and blue intensity of a frame.
pub fn mean_rgb(frame: &Frame) -> Result<[f64; 3]> {
    if frame.pixels.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    // u64 sums are exact for any realistic frame size.
    let mut sums = [0u64; 3];
    for px in &frame.pixels {
        for (s, &v) in sums.iter_mut().zip(px) {
            *s += u64::from(v);
        }
    }
    let n = frame.pixels.len() as f64;
    Ok(sums.map(|s| s as f64 / n))
}

/// Zero mean, unit population standard deviation. Flat inputs map to zeros.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "standardize needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(x.iter().map(|v| (v - mean) / std).collect())
}

/// A fixed-length slice of a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start_s: f64,
    pub start_index: usize,
    pub signal: Signal,
}

/// Converts a duration to a whole number of samples, rejecting fractions.
pub fn seconds_to_samples(seconds: f64, sample_rate_hz: f64) -> Result<usize> {
    let exact = seconds * sample_rate_hz;
    let rounded = exact.round();
    if !(seconds > 0.0) || (exact - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::invalid(format!(
            "{seconds} s at {sample_rate_hz} Hz is not a positive whole number of samples"
        )));
    }
    Ok(rounded as usize)
}

/// Number of windows `make_windows` yields for the given sample counts.
pub fn window_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// Slides a `window_s` window over the signal with a `hop_s` stride.
/// Signals shorter than one window yield no windows.
pub fn make_windows(s: &Signal, window_s: f64, hop_s: f64) -> Result<Vec<Window>> {
    let fs = s.sample_rate_hz();
    let n = seconds_to_samples(window_s, fs)?;
    let h = seconds_to_samples(hop_s, fs)?;
    Ok((0..window_count(s.len(), n, h))
        .map(|i| Window {
            start_s: i as f64 * hop_s,
            start_index: i * h,
            signal: s.slice(i * h, n),
        })
        .collect())
}

/// Linear-interpolation resampling over the same time span.
///
/// The output covers timestamps `j / target_hz` for every `j` whose time is
/// within the input's last sample time; samples past the end are clamped.
pub fn resample_linear(s: &Signal, target_hz: f64) -> Result<Signal> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_hz}")));
    }
    let fs = s.sample_rate_hz();
    let len = s.len();
    if len == 0 {
        return Signal::new(target_hz, vec![Vec::new(); s.num_channels()]);
    }
    let span = (len - 1) as f64 / fs;
    let out_len = (span * target_hz + 1e-9).floor() as usize + 1;
    let channels = s
        .channels()
        .iter()
        .map(|ch| {
            (0..out_len)
                .map(|j| {
                    let pos = j as f64 * fs / target_hz;
                    let i = pos.floor() as usize;
                    if i + 1 >= len {
                        return ch[len - 1];
                    }
                    let frac = pos - i as f64;
                    ch[i] + (ch[i + 1] - ch[i]) * frac
                })
                .collect()
        })
        .collect();
    Signal::new(target_hz, channels)
}
