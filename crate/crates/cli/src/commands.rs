use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use vitals_core::checks::{gradcheck_suite, CheckItem};
use vitals_core::data::{
    load_bidmc, load_mths, make_examples, read_manifest, split_subjects, synth_dataset, task_channels, write_manifest,
    ExampleStats, LabeledExample, Split, SplitManifest, SYNTH_HR_RANGE, SYNTH_NOISE,
};
use vitals_core::models::{load_model, save_model, ArchitectureId, Model, TaskId};
use vitals_core::signal::{make_windows, mean_rgb, read_ppm, read_signal_csv, write_signal_csv, Signal};
use vitals_core::train::{evaluate, format_history, train, ExampleSplits, LossId, TrainHistory};
use vitals_core::Exec;

use crate::config::{DatasetKind, RunConfig};
use crate::report::ReportTable;
use crate::UsageError;

pub const MODEL_FILE: &str = "model.mtvl";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "split.txt";

/// Rate frames are assumed to be captured at.
const FRAME_RATE_HZ: f64 = 30.0;

/// Writes the per-frame mean RGB of every `.ppm` file in `frames_dir`
/// (filename order) as an `idx,r,g,b` CSV. Returns the frame count.
pub fn extract(frames_dir: &Path, out: &Path) -> Result<usize> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(frames_dir)
        .with_context(|| format!("cannot list {}", frames_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    frames.sort();
    if frames.is_empty() {
        eprintln!("warning: no .ppm frames in {}", frames_dir.display());
    }
    let mut rgb: Vec<Vec<f64>> = vec![Vec::with_capacity(frames.len()); 3];
    for path in &frames {
        let frame = read_ppm(path).with_context(|| format!("frame {}", path.display()))?;
        let m = mean_rgb(&frame).with_context(|| format!("frame {}", path.display()))?;
        for (ch, v) in rgb.iter_mut().zip(m) {
            ch.push(v);
        }
    }
    write_signal_csv(out, &Signal::new(FRAME_RATE_HZ, rgb)?)?;
    Ok(frames.len())
}

/// Examples for a task together with every subject id in the dataset.
pub struct LoadedData {
    pub examples: Vec<LabeledExample>,
    pub subjects: Vec<String>,
    pub stats: ExampleStats,
}

pub struct DataSource<'a> {
    pub kind: DatasetKind,
    pub dir: Option<&'a Path>,
    pub task: TaskId,
    pub window_s: f64,
    pub hop_s: f64,
    pub synthetic_count: usize,
    pub synthetic_seed: u64,
}

pub fn load_data(src: &DataSource) -> Result<LoadedData> {
    let records = match src.kind {
        DatasetKind::Synthetic => {
            if src.task != TaskId::Hr {
                return Err(UsageError("synthetic data only supports the hr task".into()).into());
            }
            let examples = synth_dataset(src.synthetic_count, src.synthetic_seed, SYNTH_HR_RANGE, SYNTH_NOISE)?;
            let subjects = examples.iter().map(|e| e.subject.clone()).collect();
            let n = examples.len();
            return Ok(LoadedData {
                examples,
                subjects,
                stats: ExampleStats {
                    candidates: n,
                    dropped: 0,
                },
            });
        }
        DatasetKind::Mths | DatasetKind::Bidmc => {
            let dir = src
                .dir
                .ok_or_else(|| UsageError(format!("{} needs a dataset directory", src.kind)))?;
            if src.kind == DatasetKind::Mths {
                load_mths(dir, Exec::default())?
            } else {
                load_bidmc(dir, Exec::default())?
            }
        }
    };
    let (examples, stats) = make_examples(&records, src.task, src.window_s, src.hop_s)?;
    Ok(LoadedData {
        examples,
        subjects: records.into_iter().map(|r| r.id).collect(),
        stats,
    })
}

fn data_source(cfg: &RunConfig) -> DataSource<'_> {
    DataSource {
        kind: cfg.dataset,
        dir: cfg.dataset_dir.as_deref(),
        task: cfg.task,
        window_s: cfg.window_s,
        hop_s: cfg.hop_s,
        synthetic_count: cfg.synthetic_count,
        synthetic_seed: cfg.synthetic_seed,
    }
}

fn split_data(cfg: &RunConfig) -> Result<(ExampleSplits, SplitManifest, ExampleStats)> {
    let data = load_data(&data_source(cfg))?;
    let manifest = split_subjects(&data.subjects, cfg.fractions, cfg.seed)?;
    let splits = ExampleSplits::from_manifest(data.examples, &manifest)?;
    Ok((splits, manifest, data.stats))
}

/// Lines appended to the model metadata so `evaluate` can rebuild the data.
fn data_metadata(cfg: &RunConfig) -> String {
    let mut s = String::new();
    if let Some(dir) = &cfg.dataset_dir {
        let _ = writeln!(s, "dataset_dir={}", dir.display());
    }
    if cfg.dataset == DatasetKind::Synthetic {
        let _ = writeln!(s, "synthetic_count={}", cfg.synthetic_count);
        let _ = writeln!(s, "synthetic_seed={}", cfg.synthetic_seed);
    }
    s
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub manifest: SplitManifest,
    pub stats: ExampleStats,
}

/// Trains per `cfg` and writes the model, history and split manifest into
/// the configured output directory.
pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (arch, loss) = cfg.require_arch_loss()?;
    let out_dir = cfg.require_out_dir()?.to_path_buf();
    let (splits, manifest, stats) = split_data(cfg)?;
    let (mut model, history) = train(&cfg.training(arch, loss), &splits)?;
    model.set_metadata(format!("{}{}", model.metadata(), data_metadata(cfg)));

    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    save_model(&model, &out_dir.join(MODEL_FILE))?;
    let history_path = out_dir.join(HISTORY_FILE);
    std::fs::write(&history_path, format_history(&history))
        .with_context(|| format!("cannot write {}", history_path.display()))?;
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(TrainOutcome {
        model,
        history,
        manifest,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub task: String,
    pub arch: String,
    pub loss: String,
    pub split: String,
    pub mae: f64,
    pub n_examples: usize,
}

/// `key=value` lines of a model's metadata.
pub fn metadata_map(model: &Model) -> BTreeMap<String, String> {
    model
        .metadata()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

fn meta_value<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| anyhow!("model metadata lacks `{key}`; was it written by `train`?"))?;
    raw.parse()
        .map_err(|_| anyhow!("model metadata `{key}` has unreadable value {raw:?}"))
}

/// Rebuilds the run's data split from the model metadata, checks it
/// against the manifest written at training time and reports the MAE.
/// `manifest` defaults to `split.txt` next to the model.
pub fn evaluate_run(
    model_path: &Path,
    dataset_dir: Option<&Path>,
    split: Split,
    manifest: Option<&Path>,
) -> Result<EvalReport> {
    let model = load_model(model_path)?;
    let meta = metadata_map(&model);
    let kind: DatasetKind = meta_value::<String>(&meta, "dataset")?
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    let fractions: Vec<f64> = meta_value::<String>(&meta, "fractions")?
        .split(',')
        .map(|v| v.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("model metadata has unreadable fractions"))?;
    let fractions: [f64; 3] = fractions
        .try_into()
        .map_err(|_| anyhow!("model metadata needs three fractions"))?;
    let seed: u64 = meta_value(&meta, "seed")?;
    let stored_dir = meta.get("dataset_dir").map(PathBuf::from);
    let src = DataSource {
        kind,
        dir: dataset_dir.or(stored_dir.as_deref()),
        task: model.task(),
        window_s: meta_value(&meta, "window_s")?,
        hop_s: meta_value(&meta, "hop_s")?,
        synthetic_count: meta
            .get("synthetic_count")
            .map_or(Ok(0), |_| meta_value(&meta, "synthetic_count"))?,
        synthetic_seed: meta
            .get("synthetic_seed")
            .map_or(Ok(0), |_| meta_value(&meta, "synthetic_seed"))?,
    };

    let manifest_path = manifest.map_or_else(|| model_path.with_file_name(MANIFEST_FILE), Path::to_path_buf);
    if !manifest_path.is_file() {
        bail!("split manifest {} not found", manifest_path.display());
    }
    let stored = read_manifest(&manifest_path)?;
    let data = load_data(&src)?;
    let rebuilt = split_subjects(&data.subjects, fractions, seed)?;
    if stored != rebuilt {
        bail!(
            "split manifest {} does not match the model's seed/fractions on this dataset",
            manifest_path.display()
        );
    }
    let splits = ExampleSplits::from_manifest(data.examples, &rebuilt)?;
    let examples = splits.get(split);
    if examples.is_empty() {
        bail!("the {} split has no examples", split.name());
    }
    let mae = evaluate(&model, examples, Exec::default())?;
    Ok(EvalReport {
        dataset: kind.name().into(),
        task: model.task().name().into(),
        arch: model.arch().name().into(),
        loss: meta.get("loss").cloned().unwrap_or_default(),
        split: split.name().into(),
        mae,
        n_examples: examples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferLine {
    pub t_start_s: f64,
    pub estimate: f64,
}

/// Estimates over consecutive non-overlapping windows of the model's length.
pub fn infer(model_path: &Path, signal_csv: &Path) -> Result<Vec<InferLine>> {
    let model = load_model(model_path)?;
    let fs = model.sample_rate_hz();
    let signal = read_signal_csv(signal_csv, fs)?;
    let picks = task_channels(model.task(), signal.num_channels())?;
    let signal = signal.select(&picks)?;
    let window_s = model.input_len() as f64 / fs;
    if signal.duration_s() < window_s {
        eprintln!(
            "warning: {} holds {:.2} s of signal, shorter than one {window_s} s window",
            signal_csv.display(),
            signal.duration_s()
        );
    }
    make_windows(&signal, window_s, window_s)?
        .into_iter()
        .map(|w| {
            Ok(InferLine {
                t_start_s: w.start_s,
                estimate: model.predict(w.signal.channels())?,
            })
        })
        .collect()
}

/// The gradient-check suite; `fault` scales every analytic gradient.
pub fn gradcheck(fault: f64) -> Result<Vec<CheckItem>> {
    Ok(gradcheck_suite(fault)?)
}

pub fn format_checks(items: &[CheckItem]) -> String {
    let mut s = String::new();
    for item in items {
        let _ = writeln!(
            s,
            "{:<20} max_rel_error={:.3e} tol={:.0e} {}",
            item.name,
            item.report.max_rel_error,
            item.tolerance,
            if item.passed() { "PASS" } else { "FAIL" }
        );
    }
    s
}

/// Trains every architecture/loss pair on one shared split. Cells that fail
/// to train are NaN. Up to `jobs` cells run at once.
pub fn report(cfg: &RunConfig, jobs: usize) -> Result<ReportTable> {
    let (splits, _, _) = split_data(cfg)?;
    let cells: Vec<(ArchitectureId, LossId)> = ArchitectureId::ALL
        .into_iter()
        .flat_map(|a| {
            let loss = cfg.loss;
            LossId::ALL.into_iter().map(move |l| match (l, loss) {
                // keep a configured huber delta
                (LossId::Huber { .. }, Some(h @ LossId::Huber { .. })) => (a, h),
                _ => (a, l),
            })
        })
        .collect();
    let run_cell = |&(arch, loss): &(ArchitectureId, LossId)| match train(&cfg.training(arch, loss), &splits) {
        Ok((_, h)) => h.test_mae,
        Err(e) => {
            eprintln!("warning: {arch} + {loss} failed: {e}");
            f64::NAN
        }
    };
    let maes = run_cells(&cells, jobs, run_cell)?;
    let mut grid = [[f64::NAN; 4]; 4];
    for (i, v) in maes.into_iter().enumerate() {
        grid[i / 4][i % 4] = v;
    }
    Ok(ReportTable {
        dataset: cfg.dataset.name().into(),
        task: cfg.task,
        seed: cfg.seed,
        cells: grid,
    })
}

#[cfg(feature = "parallel")]
fn run_cells<T: Sync>(cells: &[T], jobs: usize, f: impl Fn(&T) -> f64 + Sync + Send) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot start worker threads")?;
    Ok(pool.install(|| cells.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_cells<T: Sync>(cells: &[T], _jobs: usize, f: impl Fn(&T) -> f64 + Sync + Send) -> Result<Vec<f64>> {
    Ok(cells.iter().map(f).collect())
}
