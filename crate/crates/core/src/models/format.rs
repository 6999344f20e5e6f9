//! `MTVL` model files.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64.
//!
//! ```text
//! magic            4 bytes  "MTVL"
//! version          u32      1
//! arch, task       u8, u8   codes: base=0 fcn=1 residual_fcn=2 dct=3; hr=0 spo2=1
//! reserved         u16      0
//! input_len        u32
//! sample_rate_hz   f64
//! has_band         u8       then, if 1: low_hz f64, high_hz f64, k_lo u32, k_hi u32
//! output_scale     f64
//! output_offset    f64
//! metadata_len     u32      then metadata_len bytes of UTF-8 text
//! layer_count      u32
//! layer table      per layer: kind u8, then
//!                    conv1d=1   in u32, out u32, kernel u32, stride u32, padding u8 (0 same, 1 valid)
//!                    relu=2     -
//!                    maxpool=3  width u32, stride u32
//!                    batchnorm=4 channels u32, eps f64, momentum f64
//!                    dense=5    in u32, out u32
//!                    gap=6      -
//!                    residual=7 channels u32, kernel u32
//! param_count      u64      then param_count f64 parameters in layer order
//! buffer_count     u64      then buffer_count f64 (batch-norm running mean, running var)
//! ```
//!
//! Nothing may follow the buffers.

use std::path::Path;

use super::{ArchitectureId, Model, TaskId};
use crate::nn::{BatchNorm1d, Conv1d, Dense, Layer, MaxPool1d, Padding, ResidualBlock, Sequential};
use crate::signal::BandMask;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTVL";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model dimensions fit in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a model to bytes.
pub fn write_model(model: &Model) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u8(model.arch.code());
    w.u8(model.task.code());
    w.u16(0);
    w.u32(model.input_len);
    w.f64(model.sample_rate_hz);
    match &model.band {
        Some(b) => {
            w.u8(1);
            w.f64(b.low_hz);
            w.f64(b.high_hz);
            w.u32(b.k_lo);
            w.u32(b.k_hi);
        }
        None => w.u8(0),
    }
    w.f64(model.output_scale);
    w.f64(model.output_offset);
    w.u32(model.metadata.len());
    w.0.extend_from_slice(model.metadata.as_bytes());
    let layers = model.net.layers();
    w.u32(layers.len());
    for layer in layers {
        match layer {
            Layer::Conv1d(c) => {
                w.u8(1);
                w.u32(c.in_channels);
                w.u32(c.out_channels);
                w.u32(c.kernel);
                w.u32(c.stride);
                w.u8(match c.padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                });
            }
            Layer::Relu => w.u8(2),
            Layer::MaxPool(p) => {
                w.u8(3);
                w.u32(p.width);
                w.u32(p.stride);
            }
            Layer::BatchNorm(b) => {
                w.u8(4);
                w.u32(b.channels);
                w.f64(b.eps);
                w.f64(b.momentum);
            }
            Layer::Dense(d) => {
                w.u8(5);
                w.u32(d.in_features);
                w.u32(d.out_features);
            }
            Layer::Gap => w.u8(6),
            Layer::Residual(r) => {
                w.u8(7);
                w.u32(r.channels());
                w.u32(r.kernel());
            }
        }
    }
    let params = model.net.params();
    w.u64(params.len());
    params.iter().for_each(|&v| w.f64(v));
    let buffers = model.net.buffers();
    w.u64(buffers.len());
    buffers.iter().for_each(|&v| w.f64(v));
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: {what} needs {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_block(&mut self, count: u64, what: &str) -> Result<Vec<f64>> {
        let remaining = (self.bytes.len() - self.pos) as u64;
        if count > remaining / 8 {
            return Err(self.err(format!(
                "truncated: {count} {what} values declared, room for {}",
                remaining / 8
            )));
        }
        (0..count).map(|_| self.f64(what)).collect()
    }
}

/// Parses a model, validating magic, version, layer table and shape chain.
pub fn read_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        r.pos = 0;
        return Err(r.err(format!(
            "bad magic {:?}, expected \"MTVL\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let at = r.pos;
    let arch = ArchitectureId::from_code(r.u8("architecture")?).ok_or(Error::Format {
        offset: at,
        message: "unknown architecture code".into(),
    })?;
    let task = TaskId::from_code(r.u8("task")?).ok_or(Error::Format {
        offset: at + 1,
        message: "unknown task code".into(),
    })?;
    if r.u16("reserved")? != 0 {
        return Err(Error::Format {
            offset: at + 2,
            message: "reserved header field is not zero".into(),
        });
    }
    let input_len = r.u32("input length")?;
    let sample_rate_hz = r.f64("sample rate")?;
    let band = match r.u8("band flag")? {
        0 => None,
        1 => {
            let low_hz = r.f64("band low")?;
            let high_hz = r.f64("band high")?;
            let k_lo = r.u32("band k_lo")?;
            let k_hi = r.u32("band k_hi")?;
            let expected = BandMask::new(input_len, sample_rate_hz, low_hz, high_hz)
                .map_err(|e| r.err(format!("invalid band: {e}")))?;
            if (expected.k_lo, expected.k_hi) != (k_lo, k_hi) {
                return Err(r.err(format!(
                    "band indices [{k_lo}, {k_hi}] disagree with {low_hz}-{high_hz} Hz"
                )));
            }
            Some(expected)
        }
        other => return Err(r.err(format!("bad band flag {other}"))),
    };
    let output_scale = r.f64("output scale")?;
    let output_offset = r.f64("output offset")?;
    let meta_len = r.u32("metadata length")?;
    let metadata = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|_| r.err("metadata is not UTF-8"))?
        .to_owned();

    let layer_count = r.u32("layer count")?;
    let mut layers = Vec::with_capacity(layer_count.min(1024));
    for i in 0..layer_count {
        let at = r.pos;
        let bad = |e: Error| Error::Format {
            offset: at,
            message: format!("layer {i}: {e}"),
        };
        let layer = match r.u8("layer kind")? {
            1 => {
                let (i_c, o_c, k, s) = (r.u32("conv")?, r.u32("conv")?, r.u32("conv")?, r.u32("conv")?);
                let padding = match r.u8("conv padding")? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(r.err(format!("bad padding code {p}"))),
                };
                Layer::Conv1d(Conv1d::new(i_c, o_c, k, s, padding).map_err(bad)?)
            }
            2 => Layer::Relu,
            3 => {
                let (width, stride) = (r.u32("maxpool")?, r.u32("maxpool")?);
                Layer::MaxPool(MaxPool1d::new(width, stride).map_err(bad)?)
            }
            4 => {
                let mut bn = BatchNorm1d::new(r.u32("batchnorm channels")?);
                bn.eps = r.f64("batchnorm eps")?;
                bn.momentum = r.f64("batchnorm momentum")?;
                Layer::BatchNorm(bn)
            }
            5 => {
                let (i_f, o_f) = (r.u32("dense")?, r.u32("dense")?);
                Layer::Dense(Dense::new(i_f, o_f).map_err(bad)?)
            }
            6 => Layer::Gap,
            7 => {
                let (c, k) = (r.u32("residual")?, r.u32("residual")?);
                Layer::Residual(ResidualBlock::new(c, k).map_err(bad)?)
            }
            kind => {
                return Err(Error::Format {
                    offset: at,
                    message: format!("layer {i}: unknown kind {kind}"),
                })
            }
        };
        layers.push(layer);
    }
    let mut net = Sequential::new(layers);

    let at = r.pos;
    let param_count = r.u64("parameter count")?;
    if param_count != net.num_params() as u64 {
        return Err(Error::Format {
            offset: at,
            message: format!(
                "layer table implies {} parameters, file declares {param_count}",
                net.num_params()
            ),
        });
    }
    let params = r.f64_block(param_count, "parameter")?;
    let at = r.pos;
    let buffer_count = r.u64("buffer count")?;
    if buffer_count != net.num_buffers() as u64 {
        return Err(Error::Format {
            offset: at,
            message: format!(
                "layer table implies {} buffer values, file declares {buffer_count}",
                net.num_buffers()
            ),
        });
    }
    let buffers = r.f64_block(buffer_count, "buffer")?;
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    net.set_params(&params)?;
    net.set_buffers(&buffers)?;

    let mut model = Model::from_parts(arch, task, input_len, sample_rate_hz, band, net).map_err(|e| Error::Format {
        offset: bytes.len(),
        message: format!("inconsistent model: {e}"),
    })?;
    model
        .set_output_affine(output_scale, output_offset)
        .map_err(|e| Error::Format {
            offset: bytes.len(),
            message: e.to_string(),
        })?;
    model.metadata = metadata;
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, WINDOW_LEN};

    fn sample() -> Model {
        let mut m = build_model(ArchitectureId::Base, TaskId::Hr, WINDOW_LEN, 3).unwrap();
        m.set_output_affine(12.5, 88.0).unwrap();
        m.set_metadata("loss=logcosh\n");
        if let Layer::BatchNorm(bn) = &mut m.net_mut().layers_mut()[1] {
            bn.running_mean[0] = 0.25;
            bn.running_var[3] = 2.0;
        }
        m
    }

    #[test]
    fn round_trip_all_architectures() {
        for arch in ArchitectureId::ALL {
            for task in TaskId::ALL {
                let m = build_model(arch, task, WINDOW_LEN, 5).unwrap();
                assert_eq!(read_model(&write_model(&m)).unwrap(), m);
            }
        }
        let m = sample();
        assert_eq!(read_model(&write_model(&m)).unwrap(), m);
    }

    #[test]
    fn parameter_section_length_matches_count() {
        let m = sample();
        let bytes = write_model(&m);
        let tail = 8 + 8 * m.param_count() + 8 + 8 * m.net().num_buffers();
        let count_at = bytes.len() - tail;
        let declared = u64::from_le_bytes(bytes[count_at..count_at + 8].try_into().unwrap());
        assert_eq!(declared as usize, m.param_count());
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = write_model(&sample());
        bytes[0] = b'X';
        match read_model(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("MTVL"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version() {
        let mut bytes = write_model(&sample());
        bytes[4] = 2;
        assert!(matches!(read_model(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn every_truncation_rejected() {
        let bytes = write_model(&build_model(ArchitectureId::Dct, TaskId::Spo2, WINDOW_LEN, 1).unwrap());
        for cut in (0..bytes.len()).step_by(7).chain([bytes.len() - 1]) {
            assert!(
                matches!(read_model(&bytes[..cut]), Err(Error::Format { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = write_model(&sample());
        bytes.push(0);
        assert!(matches!(read_model(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn broken_shape_chain_rejected() {
        let m = build_model(ArchitectureId::Fcn, TaskId::Hr, WINDOW_LEN, 1).unwrap();
        let mut bytes = write_model(&m);
        // input_len sits after magic, version, codes and reserved.
        bytes[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(read_model(&bytes), Err(Error::Format { .. })));
    }
}
