use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Frame, Signal};
use crate::{Error, Result};

/// Reads a binary PPM (P6) frame.
pub fn read_ppm(path: &Path) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("not a readable PPM frame: {e}"),
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    Frame::new(w as usize, h as usize, pixels)
}

/// Reads an `idx,r,g,b` or `idx,v` signal file. The sample rate is not
/// stored in the file and must be supplied.
pub fn read_signal_csv(path: &Path, sample_rate_hz: f64) -> Result<Signal> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let width = match names.as_slice() {
        ["idx", "r", "g", "b"] => 3,
        ["idx", "v"] => 1,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header idx,r,g,b or idx,v, got {}", names.join(",")),
            ))
        }
    };
    let mut channels = vec![Vec::new(); width];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", width + 1, record.len()),
            ));
        }
        for (c, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {field:?}")));
            }
            channels[c].push(v);
        }
    }
    Signal::new(sample_rate_hz, channels)
}

/// Writes a 1- or 3-channel signal with round-trip exact decimal values.
pub fn write_signal_csv(path: &Path, s: &Signal) -> Result<()> {
    let header = match s.num_channels() {
        1 => "idx,v",
        3 => "idx,r,g,b",
        n => return Err(Error::shape(format!("cannot write a {n}-channel signal"))),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{header}").map_err(io)?;
    for i in 0..s.len() {
        write!(out, "{i}").map_err(io)?;
        for c in s.channels() {
            write!(out, ",{:?}", c[i]).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}
