use std::fmt::Write as _;

use vitals_core::models::{ArchitectureId, TaskId};
use vitals_core::train::LossId;

/// Test MAE for every architecture (rows) and loss (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub dataset: String,
    pub task: TaskId,
    pub seed: u64,
    /// `cells[row][col]` follows `ArchitectureId::ALL` and `LossId::ALL`; NaN marks a failed run.
    pub cells: [[f64; 4]; 4],
}

fn cell_text(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

impl ReportTable {
    /// Lowest finite cell as `(arch, loss, mae)`.
    pub fn best(&self) -> Option<(ArchitectureId, LossId, f64)> {
        let mut best: Option<(ArchitectureId, LossId, f64)> = None;
        for (r, arch) in ArchitectureId::ALL.into_iter().enumerate() {
            for (c, loss) in LossId::ALL.into_iter().enumerate() {
                let v = self.cells[r][c];
                if v.is_finite() && best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((arch, loss, v));
                }
            }
        }
        best
    }

    /// A metadata comment line, the grid as CSV and a `best=` trailer.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# dataset={} task={} seed={}\n", self.dataset, self.task, self.seed);
        s.push_str("arch");
        for loss in LossId::ALL {
            let _ = write!(s, ",{loss}");
        }
        s.push('\n');
        for (row, arch) in self.cells.iter().zip(ArchitectureId::ALL) {
            s.push_str(arch.name());
            for v in row {
                let _ = write!(s, ",{}", cell_text(*v));
            }
            s.push('\n');
        }
        match self.best() {
            Some((arch, loss, v)) => {
                let _ = writeln!(s, "best={arch},{loss},{}", cell_text(v));
            }
            None => s.push_str("best=none\n"),
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<ReportTable, String> {
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or("missing metadata line")?;
        let mut dataset = None;
        let mut task = None;
        let mut seed = None;
        for part in meta.split_whitespace() {
            match part.split_once('=') {
                Some(("dataset", v)) => dataset = Some(v.to_owned()),
                Some(("task", v)) => task = Some(v.parse::<TaskId>().map_err(|e| e.to_string())?),
                Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|e| e.to_string())?),
                _ => return Err(format!("bad metadata field {part:?}")),
            }
        }
        let header = lines.next().ok_or("missing header")?;
        let expected: Vec<&str> = std::iter::once("arch")
            .chain(LossId::ALL.iter().map(|l| l.name()))
            .collect();
        if header.split(',').collect::<Vec<_>>() != expected {
            return Err(format!("unexpected header {header:?}"));
        }
        let mut cells = [[f64::NAN; 4]; 4];
        for (row, arch) in cells.iter_mut().zip(ArchitectureId::ALL) {
            let line = lines.next().ok_or("missing row")?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 || fields[0] != arch.name() {
                return Err(format!("bad row {line:?}"));
            }
            for (cell, f) in row.iter_mut().zip(&fields[1..]) {
                *cell = f.parse().map_err(|_| format!("bad cell {f:?}"))?;
            }
        }
        let table = ReportTable {
            dataset: dataset.ok_or("missing dataset")?,
            task: task.ok_or("missing task")?,
            seed: seed.ok_or("missing seed")?,
            cells,
        };
        let trailer = lines.next().ok_or("missing best= trailer")?;
        let expected = table.to_csv().lines().last().map(str::to_owned);
        if Some(trailer.to_owned()) != expected {
            return Err(format!("best= trailer {trailer:?} disagrees with the grid"));
        }
        Ok(table)
    }
}
