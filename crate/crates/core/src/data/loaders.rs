//! Directory loaders.
//!
//! MTHS layout: for each subject `<id>`, a 30 Hz signal file
//! `<id>_signal.csv` (`idx,r,g,b`) and a 1 Hz label file `<id>_labels.csv`
//! (`sec,hr,spo2`, blank cells for missing values).
//!
//! BIDMC layout (the PhysioNet CSV release): `bidmc_<nn>_Signals.csv` with a
//! `Time [s]` column and a `PLETH` column, and `bidmc_<nn>_Numerics.csv`
//! with `Time [s]`, `HR` and `SpO2` columns. The PPG rate is taken from the
//! time column and resampled to 30 Hz.

use std::path::{Path, PathBuf};

use super::{SecondLabel, SubjectRecord};
use crate::models::SAMPLE_RATE_HZ;
use crate::signal::{read_signal_csv, resample_linear, Signal};
use crate::{Error, Exec, Result};

/// Files in `dir` ending with `suffix`, sorted, with the stem before it.
fn subjects_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(suffix) {
            found.push((id.to_owned(), path.clone()));
        }
    }
    found.sort();
    Ok(found)
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// A numeric CSV table: trimmed header names and rows of optional values
/// (blank or `NaN`-like cells are `None`).
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<Option<f64>>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_path(path)
            .map_err(|e| parse_error(path, 0, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| parse_error(path, 1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let values = record
                .iter()
                .map(|cell| {
                    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| parse_error(path, line, format!("bad number {cell:?}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((line, values));
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(&self.path, 1, format!("missing column {name:?}")))
    }

    fn required(&self, line: u64, v: Option<f64>, what: &str) -> Result<f64> {
        v.ok_or_else(|| parse_error(&self.path, line, format!("missing {what}")))
    }

    /// Per-second labels from a table with a seconds column.
    fn labels(&self, time_col: &str, hr_col: &str, spo2_col: &str) -> Result<Vec<SecondLabel>> {
        let (t, hr, spo2) = (self.column(time_col)?, self.column(hr_col)?, self.column(spo2_col)?);
        let mut labels: Vec<SecondLabel> = Vec::new();
        for (line, row) in &self.rows {
            let sec = self.required(*line, row[t], "time")?;
            if sec < 0.0 || sec.fract() != 0.0 {
                return Err(parse_error(
                    &self.path,
                    *line,
                    format!("time {sec} is not a whole second"),
                ));
            }
            let sec = sec as usize;
            if labels.len() <= sec {
                labels.resize(sec + 1, SecondLabel::default());
            }
            labels[sec] = SecondLabel::new(row[hr], row[spo2]);
        }
        Ok(labels)
    }
}

fn load_mths_subject(id: &str, signal_path: &Path, dir: &Path) -> Result<SubjectRecord> {
    let label_path = dir.join(format!("{id}_labels.csv"));
    if !label_path.is_file() {
        return Err(Error::Dataset(format!(
            "subject {id}: missing label file {}",
            label_path.display()
        )));
    }
    let ppg = read_signal_csv(signal_path, SAMPLE_RATE_HZ)?;
    let labels = Table::read(&label_path)?.labels("sec", "hr", "spo2")?;
    Ok(SubjectRecord {
        id: id.to_owned(),
        ppg,
        labels,
    })
}

/// Loads every `<id>_signal.csv` / `<id>_labels.csv` pair in `dir`.
pub fn load_mths(dir: &Path, exec: Exec) -> Result<Vec<SubjectRecord>> {
    let subjects = subjects_with_suffix(dir, "_signal.csv")?;
    if subjects.is_empty() {
        return Err(Error::Dataset(format!("no *_signal.csv files in {}", dir.display())));
    }
    exec.map(&subjects, |(id, path)| load_mths_subject(id, path, dir))
        .into_iter()
        .collect()
}

fn load_bidmc_subject(id: &str, signals_path: &Path, dir: &Path) -> Result<SubjectRecord> {
    let numerics_path = dir.join(format!("{id}_Numerics.csv"));
    if !numerics_path.is_file() {
        return Err(Error::Dataset(format!(
            "subject {id}: missing numerics file {}",
            numerics_path.display()
        )));
    }
    let signals = Table::read(signals_path)?;
    let (t, pleth) = (signals.column("Time [s]")?, signals.column("PLETH")?);
    let mut times = Vec::with_capacity(signals.rows.len());
    let mut ppg = Vec::with_capacity(signals.rows.len());
    for (line, row) in &signals.rows {
        times.push(signals.required(*line, row[t], "time")?);
        ppg.push(signals.required(*line, row[pleth], "PLETH sample")?);
    }
    if ppg.len() < 2 {
        return Err(Error::Dataset(format!("subject {id}: fewer than 2 PPG samples")));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(parse_error(signals_path, 2, "time column does not increase"));
    }
    let source_hz = (ppg.len() - 1) as f64 / span;
    // Sample rates are integral in practice; snap away accumulated rounding
    // from the printed timestamps.
    let source_hz = if (source_hz - source_hz.round()).abs() < 1e-6 {
        source_hz.round()
    } else {
        source_hz
    };
    let ppg = resample_linear(&Signal::new(source_hz, vec![ppg])?, SAMPLE_RATE_HZ)?;
    let labels = Table::read(&numerics_path)?.labels("Time [s]", "HR", "SpO2")?;
    Ok(SubjectRecord {
        id: id.to_owned(),
        ppg,
        labels,
    })
}

/// Loads every `<id>_Signals.csv` / `<id>_Numerics.csv` pair in `dir`.
pub fn load_bidmc(dir: &Path, exec: Exec) -> Result<Vec<SubjectRecord>> {
    let subjects = subjects_with_suffix(dir, "_Signals.csv")?;
    if subjects.is_empty() {
        return Err(Error::Dataset(format!("no *_Signals.csv files in {}", dir.display())));
    }
    exec.map(&subjects, |(id, path)| load_bidmc_subject(id, path, dir))
        .into_iter()
        .collect()
}
