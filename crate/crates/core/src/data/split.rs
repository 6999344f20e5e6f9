use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::rng::SplitMix64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?} (train, val, test)"))),
        }
    }
}

/// Subject-to-split assignment, sorted by subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    /// Train, validation, test.
    pub fractions: [f64; 3],
    assignments: Vec<(String, Split)>,
}

impl SplitManifest {
    pub fn assignments(&self) -> &[(String, Split)] {
        &self.assignments
    }

    pub fn subjects(&self, split: Split) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, s)| *s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.assignments
            .binary_search_by(|(k, _)| k.as_str().cmp(id))
            .ok()
            .map(|i| self.assignments[i].1)
    }

    /// (train, val, test) subject counts.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let n = |s| self.assignments.iter().filter(|(_, x)| *x == s).count();
        (n(Split::Train), n(Split::Val), n(Split::Test))
    }
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    Ok(())
}

/// Deterministic subject-level split.
///
/// Ids are sorted, shuffled with Fisher-Yates driven by `SplitMix64(seed)`,
/// then the first `round(f_test * P)` go to test, the next
/// `round(f_val * P)` to validation and the rest to training.
pub fn split_subjects(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot split an empty subject list"));
    }
    validate_fractions(fractions)?;
    let mut sorted = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("subject ids must be unique"));
    }
    let p = sorted.len();
    let n_test = (fractions[2] * p as f64).round() as usize;
    let n_val = (fractions[1] * p as f64).round() as usize;
    if n_test + n_val > p {
        return Err(Error::invalid(format!(
            "rounded val/test sizes {n_val}+{n_test} exceed {p} subjects"
        )));
    }
    let mut shuffled = sorted;
    SplitMix64::new(seed).shuffle(&mut shuffled);
    let mut assignments: Vec<(String, Split)> = shuffled
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            (id, split)
        })
        .collect();
    assignments.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SplitManifest {
        seed,
        fractions,
        assignments,
    })
}

/// `seed=<int> fractions=<f,f,f>` then one `<id>,<split>` line per subject.
pub fn format_manifest(m: &SplitManifest) -> String {
    let [a, b, c] = m.fractions;
    let mut out = format!("seed={} fractions={a:?},{b:?},{c:?}\n", m.seed);
    for (id, split) in &m.assignments {
        out.push_str(&format!("{id},{split}\n"));
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<SplitManifest> {
    let err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
    let (seed, fractions) = header
        .split_once(' ')
        .and_then(|(s, f)| Some((s.strip_prefix("seed=")?, f.strip_prefix("fractions=")?)))
        .ok_or_else(|| err(1, format!("bad header {header:?}")))?;
    let seed: u64 = seed.parse().map_err(|_| err(1, format!("bad seed {seed:?}")))?;
    let fr: Vec<f64> = fractions
        .split(',')
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("bad fractions {fractions:?}")))?;
    let fractions: [f64; 3] = fr.try_into().map_err(|_| err(1, "expected three fractions".into()))?;
    let mut assignments = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i as u64 + 2;
        let (id, split) = line
            .rsplit_once(',')
            .ok_or_else(|| err(n, format!("bad assignment {line:?}")))?;
        let split = split.parse().map_err(|e: Error| err(n, e.to_string()))?;
        assignments.push((id.to_owned(), split));
    }
    let sorted = assignments.windows(2).all(|w| w[0].0 < w[1].0);
    if !sorted {
        return Err(err(2, "subject ids are not sorted and unique".into()));
    }
    Ok(SplitManifest {
        seed,
        fractions,
        assignments,
    })
}

pub fn write_manifest(m: &SplitManifest, path: &Path) -> Result<()> {
    std::fs::write(path, format_manifest(m)).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<SplitManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}
