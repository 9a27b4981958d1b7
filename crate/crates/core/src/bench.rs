//! Multi-run optimizer comparison: sweeps, box statistics, convergence
//! speed, ranking and the effect-of-runs study.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdd::{self, Split};
use crate::models::{self, ModelKind, ModelSpec, TrainConfig, TrainHistory};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::seed::{self, Stream};
use crate::simdata::{Dataset, Property};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Isolation,
    Diagnostics,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Isolation => "isolation",
            Task::Diagnostics => "diagnostics",
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Task::Isolation => ModelKind::Autoencoder,
            Task::Diagnostics => ModelKind::Classifier,
        }
    }

    pub fn default_runs(self) -> usize {
        match self {
            Task::Isolation => 30,
            Task::Diagnostics => 20,
        }
    }

    /// Final validation loss for isolation, minimum for diagnostics.
    pub fn metric(self, history: &TrainHistory) -> f64 {
        match self {
            Task::Isolation => history.final_val_loss,
            Task::Diagnostics => history.min_val_loss,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "isolation" => Ok(Task::Isolation),
            "diagnostics" => Ok(Task::Diagnostics),
            other => Err(Error::config("task", format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub task: Task,
    pub property: Property,
    pub optimizer: OptimizerConfig,
    pub n_runs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_seed: u64,
    /// Diagnostics only: whether healthy banks take part in the split.
    pub include_healthy: bool,
}

impl WorkloadSpec {
    /// Default run count, epoch budget and batch size for the task.
    pub fn new(task: Task, property: Property, optimizer: OptimizerKind, base_seed: u64) -> Self {
        Self {
            task,
            property,
            optimizer: OptimizerConfig::default_for(optimizer),
            n_runs: task.default_runs(),
            epochs: models::default_epochs(task.model_kind(), property),
            batch_size: 3,
            base_seed,
            include_healthy: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "must be >= 1"));
        }
        self.train_config(0).validate()
    }

    /// Training config of run `i`. Seeds depend only on the base seed and
    /// the run index, so every optimizer sees the same initializations and
    /// shuffles.
    pub fn train_config(&self, run: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            init_seed: seed::derive(self.base_seed, Stream::Init, run as u64),
            shuffle_seed: seed::derive(self.base_seed, Stream::Shuffle, run as u64),
            optimizer: self.optimizer.clone(),
        }
    }

    /// The split is fixed per workload, shared across runs and optimizers.
    pub fn split(&self, ds: &Dataset) -> Result<Split> {
        let s = seed::derive(self.base_seed, Stream::Split, 0);
        match self.task {
            Task::Isolation => fdd::split_isolation(ds, s),
            Task::Diagnostics => fdd::split_diagnostics(ds, s, self.include_healthy),
        }
    }

    pub fn model(&self, samples: usize) -> Result<ModelSpec> {
        match self.task {
            Task::Isolation => models::build_autoencoder(samples),
            Task::Diagnostics => models::build_classifier(samples),
        }
    }

    fn key(&self) -> WorkloadKey {
        WorkloadKey {
            task: self.task,
            property: self.property,
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_seed: self.base_seed,
        }
    }
}

/// Identifies the sweep a record belongs to, so a resumed sink cannot mix
/// records from different configurations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadKey {
    pub task: Task,
    pub property: Property,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub workload: WorkloadKey,
    pub optimizer: OptimizerKind,
    pub run_index: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    /// Absent for failed runs.
    pub history: Option<TrainHistory>,
    /// Task metric of `history`; absent for failed runs.
    pub metric: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.metric.is_none()
    }
}

/// Trains run `i` of a workload on a prepared split.
pub fn run_one(spec: &WorkloadSpec, model: &ModelSpec, split: &Split, run: usize) -> Result<RunRecord> {
    let cfg = spec.train_config(run);
    let params = models::init_params(model, cfg.init_seed)?;
    let (history, metric, error) = match models::fit(model, params, &split.train, &split.val, &cfg) {
        Ok(out) => {
            let m = spec.task.metric(&out.history);
            (Some(out.history), Some(m), None)
        }
        Err(e @ Error::NonFinite(_)) => (None, None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(RunRecord {
        workload: spec.key(),
        optimizer: spec.optimizer.kind,
        run_index: run,
        init_seed: cfg.init_seed,
        shuffle_seed: cfg.shuffle_seed,
        history,
        metric,
        error,
    })
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// JSON-lines sink. Existing records for the same workload and
    /// optimizer are reused and only the missing runs are trained.
    pub sink: Option<PathBuf>,
    /// Runs trained concurrently between two sink flushes (0: rayon pool
    /// size).
    pub chunk: usize,
}

/// Runs every run of a workload in run order. Runs within a chunk train in
/// parallel; results do not depend on the chunk size.
pub fn run_workload(spec: &WorkloadSpec, ds: &Dataset, opts: &SweepOptions) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    if ds.property() != spec.property {
        return Err(Error::InvalidInput(format!(
            "workload is for {} but the dataset holds {}",
            spec.property,
            ds.property()
        )));
    }
    let split = spec.split(ds)?;
    let model = spec.model(ds.samples())?;

    let existing = match &opts.sink {
        Some(path) => read_runs(path)?,
        None => Vec::new(),
    };
    if let Some(other) = existing.iter().find(|r| r.workload != spec.key()) {
        return Err(Error::InvalidInput(format!(
            "run sink holds records of a different sweep ({:?})",
            other.workload
        )));
    }
    let mut records: Vec<RunRecord> = existing
        .into_iter()
        .filter(|r| r.optimizer == spec.optimizer.kind && r.run_index < spec.n_runs)
        .collect();
    for (i, r) in records.iter().enumerate() {
        if r.run_index != i {
            return Err(Error::InvalidInput(format!(
                "run sink is out of order for {}: expected run {i}, found {}",
                spec.optimizer.kind, r.run_index
            )));
        }
    }

    let chunk = if opts.chunk == 0 { rayon::current_num_threads() } else { opts.chunk }.max(1);
    let mut next = records.len();
    while next < spec.n_runs {
        let end = (next + chunk).min(spec.n_runs);
        let fresh = (next..end)
            .into_par_iter()
            .map(|i| run_one(spec, &model, &split, i))
            .collect::<Result<Vec<_>>>()?;
        if let Some(path) = &opts.sink {
            append_runs(path, &fresh)?;
        }
        records.extend(fresh);
        next = end;
    }
    Ok(records)
}

/// Reads a JSON-lines run sink. A missing file is an empty sink; a
/// truncated final line (an interrupted write) is dropped and removed from
/// the file.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => {
                let kept: String = lines[..i].iter().map(|l| format!("{l}\n")).collect();
                fs::write(path, kept).map_err(|e| Error::io(path, e))?;
            }
            Err(e) => return Err(Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn append_runs(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values outside the 1.5 IQR fences, ascending.
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn fences(&self) -> (f64, f64) {
        (self.q1 - 1.5 * self.iqr, self.q3 + 1.5 * self.iqr)
    }

    pub fn is_outlier(&self, v: f64) -> bool {
        let (lo, hi) = self.fences();
        v < lo || v > hi
    }
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics at position `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles by linear interpolation, Tukey fences at 1.5 IQR, whiskers at
/// the most extreme values inside the fences.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InsufficientData("box statistics of an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("box statistics input {v}")));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        iqr,
        whisker_low: inside[0],
        whisker_high: inside[inside.len() - 1],
        outliers: s.into_iter().filter(|v| !(lo..=hi).contains(v)).collect(),
    })
}

/// First 1-based epoch whose validation loss is within `(1 + delta)` of the
/// minimum.
pub fn convergence_epoch(history: &TrainHistory, delta: f64) -> usize {
    let target = (1.0 + delta) * history.min_val_loss;
    history.val_loss.iter().position(|v| *v <= target).map_or(history.val_loss.len(), |i| i + 1)
}

pub const CONVERGENCE_DELTA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub optimizer: OptimizerKind,
    pub runs: usize,
    pub failed: usize,
    pub stats: BoxStats,
    /// Median of the metric after removing box-plot outliers.
    pub median_key: f64,
    pub iqr_key: f64,
    pub convergence_key: f64,
}

/// Ranking, best first: lowest outlier-free median, then smallest IQR, then
/// fastest median convergence, then optimizer order. Failed runs are
/// counted but do not enter the statistics.
pub fn select_best(records: &BTreeMap<OptimizerKind, Vec<RunRecord>>) -> Result<Vec<RankEntry>> {
    let mut entries = Vec::with_capacity(records.len());
    for (&kind, recs) in records {
        let ok: Vec<&RunRecord> = recs.iter().filter(|r| !r.failed()).collect();
        if ok.is_empty() {
            return Err(Error::InsufficientData(format!("no successful runs for {kind}")));
        }
        let metrics: Vec<f64> = ok.iter().filter_map(|r| r.metric).collect();
        let stats = box_stats(&metrics)?;
        let mut inliers: Vec<f64> = metrics.iter().copied().filter(|v| !stats.is_outlier(*v)).collect();
        inliers.sort_by(f64::total_cmp);
        let mut conv: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.history.as_ref())
            .map(|h| convergence_epoch(h, CONVERGENCE_DELTA) as f64)
            .collect();
        conv.sort_by(f64::total_cmp);
        entries.push(RankEntry {
            optimizer: kind,
            runs: recs.len(),
            failed: recs.len() - ok.len(),
            median_key: quantile(&inliers, 0.5),
            iqr_key: stats.iqr,
            convergence_key: if conv.is_empty() { f64::INFINITY } else { quantile(&conv, 0.5) },
            stats,
        });
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData("no optimizers to rank".into()));
    }
    entries.sort_by(|a, b| {
        a.median_key
            .total_cmp(&b.median_key)
            .then(a.iqr_key.total_cmp(&b.iqr_key))
            .then(a.convergence_key.total_cmp(&b.convergence_key))
            .then(a.optimizer.cmp(&b.optimizer))
    });
    Ok(entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunsStudyRow {
    pub runs: usize,
    pub ranking: Vec<RankEntry>,
}

impl RunsStudyRow {
    pub fn winner(&self) -> OptimizerKind {
        self.ranking[0].optimizer
    }

    pub fn median_of(&self, kind: OptimizerKind) -> Option<f64> {
        self.ranking.iter().find(|e| e.optimizer == kind).map(|e| e.median_key)
    }
}

/// Ranks the first `k` runs (by run index) of every optimizer for each `k`.
pub fn effect_of_runs(records: &BTreeMap<OptimizerKind, Vec<RunRecord>>, counts: &[usize]) -> Result<Vec<RunsStudyRow>> {
    let max = counts.iter().copied().max().unwrap_or(0);
    if counts.contains(&0) || counts.is_empty() {
        return Err(Error::config("counts", "run counts must be >= 1"));
    }
    for (kind, recs) in records {
        if recs.len() < max {
            return Err(Error::InsufficientData(format!(
                "{kind} has {} runs, the study needs {max}",
                recs.len()
            )));
        }
    }
    counts
        .iter()
        .map(|&k| {
            let prefix = records
                .iter()
                .map(|(kind, recs)| {
                    let mut sorted = recs.clone();
                    sorted.sort_by_key(|r| r.run_index);
                    sorted.truncate(k);
                    (*kind, sorted)
                })
                .collect();
            Ok(RunsStudyRow {
                runs: k,
                ranking: select_best(&prefix)?,
            })
        })
        .collect()
}

/// Groups records by optimizer, each group in run order.
pub fn group_by_optimizer(records: &[RunRecord]) -> BTreeMap<OptimizerKind, Vec<RunRecord>> {
    let mut map: BTreeMap<OptimizerKind, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.optimizer).or_default().push(r.clone());
    }
    for v in map.values_mut() {
        v.sort_by_key(|r| r.run_index);
    }
    map
}

const RANK_HEADER: [&str; 13] = [
    "rank",
    "optimizer",
    "runs",
    "failed",
    "median_key",
    "iqr",
    "convergence_epoch_median",
    "median",
    "q1",
    "q3",
    "whisker_low",
    "whisker_high",
    "outliers",
];

fn rank_fields(rank: usize, e: &RankEntry) -> Vec<String> {
    vec![
        rank.to_string(),
        e.optimizer.to_string(),
        e.runs.to_string(),
        e.failed.to_string(),
        e.median_key.to_string(),
        e.iqr_key.to_string(),
        e.convergence_key.to_string(),
        e.stats.median.to_string(),
        e.stats.q1.to_string(),
        e.stats.q3.to_string(),
        e.stats.whisker_low.to_string(),
        e.stats.whisker_high.to_string(),
        e.stats.outliers.len().to_string(),
    ]
}

pub fn write_ranking_csv(ranking: &[RankEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(RANK_HEADER)?;
    for (i, e) in ranking.iter().enumerate() {
        w.write_record(rank_fields(i + 1, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per (run count, optimizer), plus the winner of each count.
pub fn write_runs_study_csv(rows: &[RunsStudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut header = vec!["runs", "winner"];
    header.extend(RANK_HEADER);
    w.write_record(&header)?;
    for row in rows {
        for (i, e) in row.ranking.iter().enumerate() {
            let mut rec = vec![row.runs.to_string(), row.winner().to_string()];
            rec.extend(rank_fields(i + 1, e));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn history(val: &[f64]) -> TrainHistory {
        TrainHistory::from_losses(val.to_vec(), val.to_vec())
    }

    fn record(kind: OptimizerKind, run: usize, metric: f64) -> RunRecord {
        RunRecord {
            workload: WorkloadKey {
                task: Task::Isolation,
                property: Property::Current,
                epochs: 1,
                batch_size: 3,
                base_seed: 0,
            },
            optimizer: kind,
            run_index: run,
            init_seed: 0,
            shuffle_seed: 0,
            history: Some(history(&[metric])),
            metric: Some(metric),
            error: None,
        }
    }

    #[test]
    fn box_stats_examples() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3), (3.0, 2.0, 4.0));
        assert!(b.outliers.is_empty());
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 5.0));

        let b = box_stats(&[1.0, 1.0, 1.0, 1.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 1.0);

        let b = box_stats(&[7.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3, b.iqr), (7.0, 7.0, 7.0, 0.0));
        assert!(b.outliers.is_empty());
        assert!(box_stats(&[]).is_err());
        assert!(box_stats(&[f64::NAN]).is_err());
    }

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_epoch(&history(&[10.0, 1.0, 1.04, 1.2]), 0.05), 2);
        assert_eq!(convergence_epoch(&history(&[4.0, 3.0, 2.0, 1.0]), 0.0), 4);
        assert_eq!(convergence_epoch(&history(&[2.0, 2.0, 2.0]), 0.05), 1);
    }

    #[test]
    fn select_best_orders_by_median_then_iqr() {
        let mut m = BTreeMap::new();
        m.insert(OptimizerKind::Sgd, vec![record(OptimizerKind::Sgd, 0, 5.0)]);
        m.insert(OptimizerKind::Adam, vec![record(OptimizerKind::Adam, 0, 1.0)]);
        assert_eq!(select_best(&m).unwrap()[0].optimizer, OptimizerKind::Adam);

        let mut m = BTreeMap::new();
        m.insert(
            OptimizerKind::Adam,
            [1.0, 2.0, 3.0].iter().enumerate().map(|(i, v)| record(OptimizerKind::Adam, i, *v)).collect(),
        );
        m.insert(
            OptimizerKind::Nadam,
            [1.9, 2.0, 2.1].iter().enumerate().map(|(i, v)| record(OptimizerKind::Nadam, i, *v)).collect(),
        );
        let r = select_best(&m).unwrap();
        assert_eq!(r[0].optimizer, OptimizerKind::Nadam);
        assert_eq!(r[0].median_key, r[1].median_key);
    }

    #[test]
    fn select_best_ignores_outliers_and_failures() {
        let mut recs: Vec<RunRecord> = [1.0, 1.0, 1.0, 1.0, 100.0]
            .iter()
            .enumerate()
            .map(|(i, v)| record(OptimizerKind::Sgd, i, *v))
            .collect();
        recs.push(RunRecord {
            history: None,
            metric: None,
            error: Some("diverged".into()),
            ..record(OptimizerKind::Sgd, 5, 0.0)
        });
        let m = BTreeMap::from([(OptimizerKind::Sgd, recs)]);
        let r = select_best(&m).unwrap();
        assert_eq!(r[0].median_key, 1.0);
        assert_eq!((r[0].runs, r[0].failed), (6, 1));
    }

    #[test]
    fn effect_of_runs_prefixes() {
        let mk = |kind, vals: &[f64]| vals.iter().enumerate().map(|(i, v)| record(kind, i, *v)).collect::<Vec<_>>();
        let m = BTreeMap::from([
            (OptimizerKind::Adam, mk(OptimizerKind::Adam, &[0.5, 3.0, 3.0])),
            (OptimizerKind::RmsProp, mk(OptimizerKind::RmsProp, &[1.0, 1.0, 1.0])),
        ]);
        let rows = effect_of_runs(&m, &[1, 3]).unwrap();
        assert_eq!(rows[0].winner(), OptimizerKind::Adam);
        assert_eq!(rows[1].winner(), OptimizerKind::RmsProp);
        assert_eq!(rows[1].ranking, select_best(&m).unwrap());
        assert!(effect_of_runs(&m, &[4]).is_err());
        assert!(effect_of_runs(&m, &[0]).is_err());
    }

    #[test]
    fn truncated_sink_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        append_runs(&path, &[record(OptimizerKind::Adam, 0, 1.0), record(OptimizerKind::Adam, 1, 2.0)]).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.truncate(text.len() - 20);
        fs::write(&path, &text).unwrap();
        let back = read_runs(&path).unwrap();
        assert_eq!(back, vec![record(OptimizerKind::Adam, 0, 1.0)]);
        assert_eq!(read_runs(&path).unwrap().len(), 1);
        assert!(read_runs(&dir.path().join("absent.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn task_parsing_and_metric_rule() {
        assert_eq!("Isolation".parse::<Task>().unwrap(), Task::Isolation);
        assert!("x".parse::<Task>().is_err());
        let h = history(&[3.0, 1.0, 2.0]);
        assert_eq!(Task::Isolation.metric(&h), 2.0);
        assert_eq!(Task::Diagnostics.metric(&h), 1.0);
    }

    #[test]
    fn run_seeds_are_distinct_and_shared_across_optimizers() {
        let a = WorkloadSpec::new(Task::Isolation, Property::Current, OptimizerKind::Adam, 9);
        let b = WorkloadSpec::new(Task::Isolation, Property::Current, OptimizerKind::Sgd, 9);
        let seeds: std::collections::HashSet<u64> = (0..30).map(|i| a.train_config(i).init_seed).collect();
        assert_eq!(seeds.len(), 30);
        assert_eq!(a.train_config(4).init_seed, b.train_config(4).init_seed);
        assert_eq!(a.epochs, 150);
        let mut bad = a.clone();
        bad.n_runs = 0;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn outlier_partition_is_exact(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let b = box_stats(&values).unwrap();
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            let (lo, hi) = b.fences();
            let mut inside: Vec<f64> = values.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
            inside.extend(&b.outliers);
            let mut all = values.clone();
            all.sort_by(f64::total_cmp);
            inside.sort_by(f64::total_cmp);
            prop_assert_eq!(inside, all);
            prop_assert!(b.whisker_low >= lo && b.whisker_high <= hi);
        }

        #[test]
        fn select_best_ignores_record_order(
            a in prop::collection::vec(0.0f64..10.0, 1..12),
            b in prop::collection::vec(0.0f64..10.0, 1..12),
            rot in 0usize..12,
        ) {
            let mk = |kind, vals: &[f64]| vals.iter().enumerate().map(|(i, v)| record(kind, i, *v)).collect::<Vec<_>>();
            let m1 = BTreeMap::from([
                (OptimizerKind::Adam, mk(OptimizerKind::Adam, &a)),
                (OptimizerKind::Nadam, mk(OptimizerKind::Nadam, &b)),
            ]);
            let mut m2 = m1.clone();
            for v in m2.values_mut() {
                let n = v.len();
                v.rotate_left(rot % n);
                v.reverse();
            }
            prop_assert_eq!(select_best(&m1).unwrap(), select_best(&m2).unwrap());
        }
    }
}
