//! Datasets: loaders, window/label pairing, subject-level splits and a
//! synthetic PPG generator.

mod loaders;
mod split;

pub use loaders::{load_bidmc, load_mths};
pub use split::{
    format_manifest, parse_manifest, read_manifest, split_subjects, validate_fractions, write_manifest, Split,
    SplitManifest,
};

use crate::models::{TaskId, SAMPLE_RATE_HZ, WINDOW_LEN};
use crate::rng::SplitMix64;
use crate::signal::{make_windows, Signal};
use crate::{Error, Result};

/// Ground truth for one second of recording.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SecondLabel {
    pub hr: Option<f64>,
    pub spo2: Option<f64>,
}

impl SecondLabel {
    /// Values outside the task's plausible range become missing.
    pub fn new(hr: Option<f64>, spo2: Option<f64>) -> Self {
        let keep = |v: Option<f64>, task: TaskId| {
            let (lo, hi) = task.valid_range();
            v.filter(|x| x.is_finite() && (lo..=hi).contains(x))
        };
        Self {
            hr: keep(hr, TaskId::Hr),
            spo2: keep(spo2, TaskId::Spo2),
        }
    }

    pub fn get(&self, task: TaskId) -> Option<f64> {
        match task {
            TaskId::Hr => self.hr,
            TaskId::Spo2 => self.spo2,
        }
    }
}

/// One subject's PPG with its 1 Hz labels (`labels[s]` covers second `s`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub ppg: Signal,
    pub labels: Vec<SecondLabel>,
}

/// A model-ready window and its scalar target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// One slice per model input channel.
    pub window: Vec<Vec<f64>>,
    pub target: f64,
    pub subject: String,
    pub start_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExampleStats {
    pub candidates: usize,
    pub dropped: usize,
}

impl ExampleStats {
    pub fn kept(&self) -> usize {
        self.candidates - self.dropped
    }
}

/// Channel indices a task reads from a 1- or 3-channel recording.
/// Single-channel PPG is replicated for the three-channel SpO2 input.
pub fn task_channels(task: TaskId, available: usize) -> Result<Vec<usize>> {
    match (task, available) {
        (TaskId::Hr, 1 | 3) => Ok(vec![0]),
        (TaskId::Spo2, 1) => Ok(vec![0, 0, 0]),
        (TaskId::Spo2, 3) => Ok(vec![0, 1, 2]),
        _ => Err(Error::shape(format!(
            "recordings must have 1 or 3 channels, got {available}"
        ))),
    }
}

/// Cuts each record into windows and pairs every window with the mean of
/// the 1 Hz labels it covers. Windows with any missing label are dropped
/// and counted.
pub fn make_examples(
    records: &[SubjectRecord],
    task: TaskId,
    window_s: f64,
    hop_s: f64,
) -> Result<(Vec<LabeledExample>, ExampleStats)> {
    if window_s.fract() != 0.0 || hop_s.fract() != 0.0 {
        return Err(Error::invalid(
            "window and hop must be whole seconds to line up with 1 Hz labels",
        ));
    }
    let label_count = window_s as usize;
    let mut stats = ExampleStats::default();
    let mut out = Vec::new();
    for rec in records {
        let picks = task_channels(task, rec.ppg.num_channels())?;
        let ppg = rec.ppg.select(&picks)?;
        for w in make_windows(&ppg, window_s, hop_s)? {
            stats.candidates += 1;
            let first = w.start_s as usize;
            let labels = rec.labels.get(first..first + label_count);
            let values: Option<Vec<f64>> = labels.and_then(|ls| ls.iter().map(|l| l.get(task)).collect());
            match values {
                Some(v) => out.push(LabeledExample {
                    window: w.signal.into_channels(),
                    target: v.iter().sum::<f64>() / v.len() as f64,
                    subject: rec.id.clone(),
                    start_s: w.start_s,
                }),
                None => stats.dropped += 1,
            }
        }
    }
    Ok((out, stats))
}

/// Heart-rate range the synthetic generator draws from, in bpm.
pub const SYNTH_HR_RANGE: (f64, f64) = (48.0, 180.0);
pub const SYNTH_NOISE: f64 = 0.1;

/// `n` single-channel 10 s windows of `sin(2 pi f t) + noise * N(0, 1)` at
/// 30 Hz with `f = hr / 60`, `hr` uniform in `hr_range`. Each window is its
/// own subject (`syn00000`, `syn00001`, ...).
pub fn synth_dataset(n: usize, seed: u64, hr_range: (f64, f64), noise: f64) -> Result<Vec<LabeledExample>> {
    let (lo, hi) = hr_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::invalid(format!("bad heart-rate range {lo}-{hi}")));
    }
    let mut rng = SplitMix64::new(seed);
    Ok((0..n)
        .map(|i| {
            let hr = rng.uniform(lo, hi);
            let window = synth_window(hr, noise, &mut rng);
            LabeledExample {
                window: vec![window],
                target: hr,
                subject: format!("syn{i:05}"),
                start_s: 0.0,
            }
        })
        .collect())
}

/// One synthetic window at `hr` bpm, drawing noise from `rng`.
pub fn synth_window(hr: f64, noise: f64, rng: &mut SplitMix64) -> Vec<f64> {
    let f = hr / 60.0;
    (0..WINDOW_LEN)
        .map(|n| {
            let t = n as f64 / SAMPLE_RATE_HZ;
            (std::f64::consts::TAU * f * t).sin() + noise * rng.normal()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seconds: usize, channels: usize, hr: impl Fn(usize) -> Option<f64>) -> SubjectRecord {
        let n = seconds * 30;
        SubjectRecord {
            id: "s1".into(),
            ppg: Signal::new(30.0, vec![(0..n).map(|i| i as f64).collect(); channels]).unwrap(),
            labels: (0..seconds).map(|s| SecondLabel::new(hr(s), Some(97.0))).collect(),
        }
    }

    #[test]
    fn target_is_label_mean() {
        let rec = record(10, 3, |s| Some(70.0 + s as f64));
        let (ex, stats) = make_examples(&[rec], TaskId::Hr, 10.0, 1.0).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].target, 74.5);
        assert_eq!(ex[0].window.len(), 1);
        assert_eq!(
            stats,
            ExampleStats {
                candidates: 1,
                dropped: 0
            }
        );
    }

    #[test]
    fn missing_label_drops_window() {
        let rec = record(11, 1, |s| if s == 5 { None } else { Some(80.0) });
        let (ex, stats) = make_examples(&[rec], TaskId::Hr, 10.0, 1.0).unwrap();
        assert!(ex.is_empty());
        assert_eq!(
            stats,
            ExampleStats {
                candidates: 2,
                dropped: 2
            }
        );

        let rec = record(11, 1, |s| if s == 0 { None } else { Some(80.0) });
        let (ex, stats) = make_examples(&[rec], TaskId::Hr, 10.0, 1.0).unwrap();
        assert_eq!((ex.len(), stats.dropped), (1, 1));
        assert_eq!(ex[0].start_s, 1.0);
    }

    #[test]
    fn out_of_range_labels_are_missing() {
        let l = SecondLabel::new(Some(300.0), Some(101.0));
        assert_eq!(l, SecondLabel { hr: None, spo2: None });
        let l = SecondLabel::new(Some(30.0), Some(70.0));
        assert_eq!((l.hr, l.spo2), (Some(30.0), Some(70.0)));
    }

    #[test]
    fn eight_minute_candidates() {
        let rec = record(480, 1, |_| Some(60.0));
        let (ex, stats) = make_examples(&[rec], TaskId::Spo2, 10.0, 1.0).unwrap();
        assert_eq!(stats.candidates, 471);
        assert_eq!(ex.len(), 471);
        // single-channel PPG replicated for SpO2
        assert_eq!(ex[0].window.len(), 3);
        assert_eq!(ex[0].window[0], ex[0].window[2]);
        assert_eq!(ex[0].target, 97.0);
    }

    #[test]
    fn short_label_track_drops() {
        let mut rec = record(12, 1, |_| Some(60.0));
        rec.labels.truncate(10);
        let (ex, stats) = make_examples(&[rec], TaskId::Hr, 10.0, 1.0).unwrap();
        assert_eq!((ex.len(), stats.candidates, stats.dropped), (1, 3, 2));
    }

    #[test]
    fn synth_noiseless_is_exact_sinusoid() {
        let mut rng = SplitMix64::new(0);
        let w = synth_window(60.0, 0.0, &mut rng);
        for (n, v) in w.iter().enumerate() {
            let t = n as f64 / 30.0;
            assert_eq!(*v, (std::f64::consts::TAU * 1.0 * t).sin());
        }
        let ex = synth_dataset(1, 3, (60.0, 60.0), 0.0).unwrap();
        assert_eq!(ex[0].target, 60.0);
        assert_eq!(ex[0].window[0], w);
    }

    #[test]
    fn synth_deterministic_and_in_range() {
        let a = synth_dataset(50, 7, SYNTH_HR_RANGE, SYNTH_NOISE).unwrap();
        let b = synth_dataset(50, 7, SYNTH_HR_RANGE, SYNTH_NOISE).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|e| (48.0..=180.0).contains(&e.target)));
        assert_ne!(a, synth_dataset(50, 8, SYNTH_HR_RANGE, SYNTH_NOISE).unwrap());
    }
}
