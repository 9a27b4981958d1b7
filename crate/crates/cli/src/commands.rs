use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use rodbench::bench::{self, RankEntry, RunRecord, RunsStudyRow, SweepOptions, Task, WorkloadSpec};
use rodbench::fdd;
use rodbench::models::{self, TrainHistory};
use rodbench::optim::OptimizerKind;
use rodbench::simdata::{self, Dataset, FaultClass, GenConfig, Property};

use crate::svg;
use crate::{BenchArgs, Command, DataArgs, DiagnoseArgs, GenArgs, ReplayArgs, StudyArgs, SweepArgs, TrainArgs};

pub const MANIFEST: &str = "experiment.json";
const RUNS: &str = "runs.jsonl";
const FAILURES: &str = "failures.json";

pub enum Outcome {
    Success,
    /// Some runs failed; carries the machine-readable summary.
    PartialFailure(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub dataset: Option<DatasetRef>,
    pub config: serde_json::Value,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub property: Property,
    pub master_seed: u64,
    pub samples: usize,
    pub banks: usize,
}

pub fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Replay(a) => replay(&a),
        Command::Report(a) => report(&a.dir),
        other => run(other),
    }
}

fn run(command: Command) -> Result<Outcome> {
    let jobs = match &command {
        Command::Gen(a) => a.output.jobs,
        Command::Isolate(a) => a.output.jobs,
        Command::Diagnose(a) => a.train.output.jobs,
        Command::Bench(a) => a.sweep.output.jobs,
        Command::RunsStudy(a) => a.sweep.output.jobs,
        Command::Report(_) | Command::Replay(_) => 1,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| match command {
        Command::Gen(a) => gen(&a),
        Command::Isolate(a) => isolate(&a),
        Command::Diagnose(a) => diagnose(&a),
        Command::Bench(a) => bench_cmd(&a),
        Command::RunsStudy(a) => runs_study(&a),
        Command::Report(_) | Command::Replay(_) => unreachable!("handled by dispatch"),
    })
}

fn replay(a: &ReplayArgs) -> Result<Outcome> {
    let m = read_manifest(&a.dir)?;
    let mut command = m.command;
    let out = match &mut command {
        Command::Gen(x) => &mut x.output,
        Command::Isolate(x) => &mut x.output,
        Command::Diagnose(x) => &mut x.train.output,
        Command::Bench(x) => &mut x.sweep.output,
        Command::RunsStudy(x) => &mut x.sweep.output,
        Command::Report(_) | Command::Replay(_) => bail!("manifest records a non-replayable command"),
    };
    if let Some(dir) = &a.out {
        out.out = dir.clone();
    }
    out.jobs = a.jobs;
    run(command)
}

fn read_manifest(dir: &Path) -> Result<ExperimentManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_manifest(
    out: &Path,
    command: Command,
    seed: u64,
    dataset: Option<DatasetRef>,
    config: serde_json::Value,
    artifacts: Vec<String>,
) -> Result<()> {
    let m = ExperimentManifest {
        tool: "rodbench".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed,
        dataset,
        config,
        artifacts,
    };
    write_text(&out.join(MANIFEST), &(serde_json::to_string_pretty(&m)? + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn gen(a: &GenArgs) -> Result<Outcome> {
    let cfg = GenConfig::default().with_sample_rate(a.rate);
    let ds = simdata::generate_dataset(a.property, a.batches as usize, &cfg, a.output.seed)?;
    simdata::write_dataset(&ds, &a.output.out)?;
    let mut artifacts: Vec<String> = ds.manifest.banks.iter().map(|b| b.file.clone()).collect();
    artifacts.push("manifest.json".into());
    write_manifest(
        &a.output.out,
        Command::Gen(a.clone()),
        a.output.seed,
        None,
        serde_json::to_value(cfg)?,
        artifacts,
    )?;
    eprintln!(
        "generated {} banks of {} samples in {}",
        ds.banks.len(),
        ds.samples(),
        a.output.out.display()
    );
    Ok(Outcome::Success)
}

fn load_dataset(d: &DataArgs) -> Result<(Dataset, DatasetRef)> {
    let ds = simdata::read_dataset(&d.dataset).with_context(|| format!("loading dataset {}", d.dataset.display()))?;
    if let Some(p) = d.property {
        if p != ds.property() {
            bail!("--property {p} but {} holds {} banks", d.dataset.display(), ds.property());
        }
    }
    let path = fs::canonicalize(&d.dataset).unwrap_or_else(|_| d.dataset.clone());
    let r = DatasetRef {
        path,
        property: ds.property(),
        master_seed: ds.manifest.master_seed,
        samples: ds.samples(),
        banks: ds.banks.len(),
    };
    Ok((ds, r))
}

fn workload(task: Task, d: &DataArgs, property: Property, kind: OptimizerKind, seed: u64) -> WorkloadSpec {
    let mut w = WorkloadSpec::new(task, property, kind, seed);
    if let Some(e) = d.epochs {
        w.epochs = e as usize;
    }
    w.optimizer.bias_correction = d.bias_correction;
    w
}

fn curve(h: &TrainHistory) -> Vec<(f64, f64)> {
    h.val_loss.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect()
}

fn isolate(a: &TrainArgs) -> Result<Outcome> {
    let (ds, dref) = load_dataset(&a.data)?;
    let w = workload(Task::Isolation, &a.data, ds.property(), a.optimizer, a.output.seed);
    let cfg = w.train_config(0);
    let split = w.split(&ds)?;
    let rep = fdd::isolation_on_split(&ds, &split, &cfg)?;
    let out = &a.output.out;
    create_dir(out)?;

    let mut artifacts = vec!["isolation.csv".to_string(), "history.csv".into(), "summary.json".into()];
    rep.write_csv(&out.join("isolation.csv"))?;
    rep.fit.history.write_csv(&out.join("history.csv"))?;
    models::write_params(&out.join("model"), &rep.spec, &rep.fit.final_params, &rep.fit.standardizer)?;

    let faulty_rod = ds.manifest.config.faulty_rod;
    let means = rep.class_mean_contributions();
    let labels: Vec<String> = (1..=simdata::RODS_PER_BANK).map(|r| r.to_string()).collect();
    for (class, values) in &means {
        let name = format!("contributions_{class}.svg");
        let highlight = (*class != FaultClass::Healthy).then_some(faulty_rod - 1);
        let title = format!("Mean rod contribution, {class} banks ({})", ds.property());
        write_text(&out.join(&name), &svg::bar_chart(&title, "mean squared residual", &labels, values, highlight))?;
        artifacts.push(name);
    }
    let loss = svg::line_chart(
        &format!("Validation loss, isolation ({}, {})", ds.property(), a.optimizer),
        "epoch",
        "MSE",
        &[(a.optimizer.to_string(), curve(&rep.fit.history))],
        true,
    );
    write_text(&out.join("loss.svg"), &loss)?;
    artifacts.push("loss.svg".into());

    let per_class: BTreeMap<String, serde_json::Value> = FaultClass::ALL
        .iter()
        .map(|c| {
            let rows: Vec<_> = rep.test_rows().filter(|r| r.label == *c).collect();
            let detected = rows.iter().filter(|r| r.result.detected).count();
            let hits = rows.iter().filter(|r| Some(r.result.flagged_rod) == r.faulty_rod).count();
            (
                c.to_string(),
                json!({ "test_banks": rows.len(), "detected": detected, "flagged_faulty_rod": hits }),
            )
        })
        .collect();
    let summary = json!({
        "optimizer": a.optimizer,
        "threshold": rep.threshold,
        "isolation_accuracy": rep.isolation_accuracy(),
        "final_val_loss": rep.fit.history.final_val_loss,
        "min_val_loss": rep.fit.history.min_val_loss,
        "best_epoch": rep.fit.history.best_epoch,
        "test": per_class,
        "mean_contributions": means.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>(),
    });
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    write_manifest(
        out,
        Command::Isolate(a.clone()),
        a.output.seed,
        Some(dref),
        json!({ "workload": w, "train": cfg, "model": rep.spec }),
        artifacts,
    )?;
    println!(
        "isolation ({}, {}): threshold {:.4}, faulty rod flagged in {:.1}% of faulty test banks",
        ds.property(),
        a.optimizer,
        rep.threshold,
        100.0 * rep.isolation_accuracy()
    );
    Ok(Outcome::Success)
}

fn diagnose(a: &DiagnoseArgs) -> Result<Outcome> {
    let t = &a.train;
    let (ds, dref) = load_dataset(&t.data)?;
    let mut w = workload(Task::Diagnostics, &t.data, ds.property(), t.optimizer, t.output.seed);
    w.include_healthy = !a.faulty_only;
    let cfg = w.train_config(0);
    let split = w.split(&ds)?;
    let rep = fdd::diagnostics_on_split(&ds, &split, &cfg)?;
    let out = &t.output.out;
    create_dir(out)?;

    rep.confusion.write_csv(&out.join("confusion.csv"))?;
    rep.fit.history.write_csv(&out.join("history.csv"))?;
    models::write_params(&out.join("model"), &rep.spec, &rep.fit.best_params, &rep.fit.standardizer)?;
    let labels: Vec<String> = FaultClass::ALL.iter().map(|c| c.to_string()).collect();
    let counts: Vec<Vec<usize>> = rep.confusion.counts.iter().map(|r| r.to_vec()).collect();
    let title = format!(
        "Diagnostics ({}, {}), accuracy {:.3}",
        ds.property(),
        t.optimizer,
        rep.accuracy
    );
    write_text(&out.join("confusion.svg"), &svg::heatmap(&title, &labels, &counts))?;
    let loss = svg::line_chart(
        &format!("Validation loss, diagnostics ({}, {})", ds.property(), t.optimizer),
        "epoch",
        "cross-entropy",
        &[(t.optimizer.to_string(), curve(&rep.fit.history))],
        true,
    );
    write_text(&out.join("loss.svg"), &loss)?;
    let summary = json!({
        "optimizer": t.optimizer,
        "accuracy": rep.accuracy,
        "test_banks": rep.confusion.total(),
        "confusion": rep.confusion.counts,
        "min_val_loss": rep.fit.history.min_val_loss,
        "best_epoch": rep.fit.history.best_epoch,
    });
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    write_manifest(
        out,
        Command::Diagnose(a.clone()),
        t.output.seed,
        Some(dref),
        json!({ "workload": w, "train": cfg, "model": rep.spec }),
        ["confusion.csv", "confusion.svg", "history.csv", "loss.svg", "summary.json"]
            .map(String::from)
            .to_vec(),
    )?;
    println!(
        "diagnostics ({}, {}): test accuracy {:.3} on {} banks",
        ds.property(),
        t.optimizer,
        rep.accuracy,
        rep.confusion.total()
    );
    Ok(Outcome::Success)
}

/// Runs the sweep for every selected optimizer into `out/runs.jsonl`.
fn sweep(s: &SweepArgs, runs: usize) -> Result<(Vec<WorkloadSpec>, Vec<RunRecord>, DatasetRef)> {
    let (ds, dref) = load_dataset(&s.data)?;
    let out = &s.output.out;
    create_dir(out)?;
    let kinds: Vec<OptimizerKind> = s.optimizer.map_or(OptimizerKind::ALL.to_vec(), |k| vec![k]);
    let opts = SweepOptions {
        sink: Some(out.join(RUNS)),
        chunk: s.output.jobs,
    };
    let mut specs = Vec::new();
    let mut records = Vec::new();
    for kind in kinds {
        let mut w = workload(s.task, &s.data, ds.property(), kind, s.output.seed);
        w.n_runs = runs;
        w.include_healthy = !s.faulty_only;
        let recs = bench::run_workload(&w, &ds, &opts)?;
        let failed = recs.iter().filter(|r| r.failed()).count();
        eprintln!("{} {} {kind}: {} runs, {failed} failed", s.task, ds.property(), recs.len());
        records.extend(recs);
        specs.push(w);
    }
    Ok((specs, records, dref))
}

fn failure_summary(out: &Path, records: &[RunRecord]) -> Result<Option<String>> {
    let failed: Vec<_> = records
        .iter()
        .filter(|r| r.failed())
        .map(|r| json!({ "optimizer": r.optimizer, "run_index": r.run_index, "error": r.error }))
        .collect();
    let path = out.join(FAILURES);
    if failed.is_empty() {
        if path.exists() {
            fs::remove_file(&path)?;
        }
        return Ok(None);
    }
    let summary = json!({ "total_runs": records.len(), "failed_runs": failed.len(), "failures": failed });
    let text = serde_json::to_string(&summary)?;
    write_text(&path, &(text.clone() + "\n"))?;
    Ok(Some(text))
}

/// Ranking CSV, box plot and first-run loss curves for a set of records.
fn bench_artifacts(out: &Path, task: Task, property: Property, records: &[RunRecord]) -> Result<Vec<RankEntry>> {
    let grouped = bench::group_by_optimizer(records);
    let ranking = bench::select_best(&grouped)?;
    bench::write_ranking_csv(&ranking, &out.join("summary.csv"))?;
    let groups: Vec<_> = ranking
        .iter()
        .map(|e| {
            let vals: Vec<f64> = grouped[&e.optimizer].iter().filter_map(|r| r.metric).collect();
            (e.optimizer.to_string(), e.stats.clone(), vals)
        })
        .collect();
    let metric = match task {
        Task::Isolation => "final validation loss",
        Task::Diagnostics => "minimum validation loss",
    };
    let n = grouped.values().map(Vec::len).max().unwrap_or(0);
    let title = format!("{task} ({property}), {n} runs");
    write_text(&out.join("boxplot.svg"), &svg::boxplot(&title, metric, &groups, true))?;
    let curves: Vec<_> = grouped
        .iter()
        .filter_map(|(k, recs)| {
            let h = recs.iter().find(|r| r.run_index == 0)?.history.as_ref()?;
            Some((k.to_string(), curve(h)))
        })
        .collect();
    let title = format!("Validation loss, single run, {task} ({property})");
    write_text(&out.join("loss_curves.svg"), &svg::line_chart(&title, "epoch", "validation loss", &curves, true))?;
    Ok(ranking)
}

fn print_ranking(ranking: &[RankEntry]) {
    for (i, e) in ranking.iter().enumerate() {
        println!(
            "{:>2}. {:<8} median {:.6e}  iqr {:.3e}  convergence {:>5.1}  ({} runs, {} failed)",
            i + 1,
            e.optimizer.to_string(),
            e.median_key,
            e.iqr_key,
            e.convergence_key,
            e.runs,
            e.failed
        );
    }
}

fn bench_cmd(a: &BenchArgs) -> Result<Outcome> {
    let s = &a.sweep;
    let runs = a.runs.map_or(s.task.default_runs(), |r| r as usize);
    let (specs, records, dref) = sweep(s, runs)?;
    let out = &s.output.out;
    let ranking = bench_artifacts(out, s.task, dref.property, &records)?;
    let fails = failure_summary(out, &records)?;
    let mut artifacts = vec![RUNS, "summary.csv", "boxplot.svg", "loss_curves.svg"];
    if fails.is_some() {
        artifacts.push(FAILURES);
    }
    write_manifest(
        out,
        Command::Bench(a.clone()),
        s.output.seed,
        Some(dref),
        json!({ "workloads": specs }),
        artifacts.into_iter().map(String::from).collect(),
    )?;
    print_ranking(&ranking);
    Ok(fails.map_or(Outcome::Success, Outcome::PartialFailure))
}

fn study_artifacts(out: &Path, task: Task, property: Property, rows: &[RunsStudyRow]) -> Result<()> {
    bench::write_runs_study_csv(rows, &out.join("runs_study.csv"))?;
    let mut series: BTreeMap<OptimizerKind, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        for e in &row.ranking {
            series.entry(e.optimizer).or_default().push((row.runs as f64, e.median_key));
        }
    }
    let series: Vec<_> = series.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let title = format!("Median metric against number of runs, {task} ({property})");
    write_text(&out.join("runs_study.svg"), &svg::line_chart(&title, "runs", "median metric", &series, true))
}

fn runs_study(a: &StudyArgs) -> Result<Outcome> {
    let s = &a.sweep;
    let max = a.counts.iter().copied().max().unwrap_or(1);
    let runs = a.runs.map_or(max, |r| r as usize);
    let (specs, records, dref) = sweep(s, runs)?;
    let out = &s.output.out;
    let rows = bench::effect_of_runs(&bench::group_by_optimizer(&records), &a.counts)?;
    study_artifacts(out, s.task, dref.property, &rows)?;
    bench_artifacts(out, s.task, dref.property, &records)?;
    let fails = failure_summary(out, &records)?;
    let mut artifacts = vec![RUNS, "runs_study.csv", "runs_study.svg", "summary.csv", "boxplot.svg", "loss_curves.svg"];
    if fails.is_some() {
        artifacts.push(FAILURES);
    }
    write_manifest(
        out,
        Command::RunsStudy(a.clone()),
        s.output.seed,
        Some(dref),
        json!({ "workloads": specs, "counts": a.counts }),
        artifacts.into_iter().map(String::from).collect(),
    )?;
    for row in &rows {
        let medians: Vec<String> = row
            .ranking
            .iter()
            .map(|e| format!("{} {:.4e}", e.optimizer, e.median_key))
            .collect();
        println!("{:>3} runs: winner {:<8} | {}", row.runs, row.winner().to_string(), medians.join(", "));
    }
    Ok(fails.map_or(Outcome::Success, Outcome::PartialFailure))
}

/// Rebuilds derived summaries and figures from the recorded outputs
/// without retraining, and prints the headline results.
fn report(dir: &Path) -> Result<Outcome> {
    let m = read_manifest(dir)?;
    match &m.command {
        Command::Bench(a) => {
            let records = bench::read_runs(&dir.join(RUNS))?;
            let property = m.dataset.as_ref().map_or(Property::Current, |d| d.property);
            let ranking = bench_artifacts(dir, a.sweep.task, property, &records)?;
            print_ranking(&ranking);
            Ok(failure_summary(dir, &records)?.map_or(Outcome::Success, Outcome::PartialFailure))
        }
        Command::RunsStudy(a) => {
            let records = bench::read_runs(&dir.join(RUNS))?;
            let property = m.dataset.as_ref().map_or(Property::Current, |d| d.property);
            let rows = bench::effect_of_runs(&bench::group_by_optimizer(&records), &a.counts)?;
            study_artifacts(dir, a.sweep.task, property, &rows)?;
            let ranking = bench_artifacts(dir, a.sweep.task, property, &records)?;
            for row in &rows {
                println!("{:>3} runs: winner {}", row.runs, row.winner());
            }
            print_ranking(&ranking);
            Ok(failure_summary(dir, &records)?.map_or(Outcome::Success, Outcome::PartialFailure))
        }
        Command::Isolate(_) | Command::Diagnose(_) => {
            let text = fs::read_to_string(dir.join("summary.json")).context("reading summary.json")?;
            print!("{text}");
            Ok(Outcome::Success)
        }
        Command::Gen(_) => {
            let ds = simdata::read_dataset(dir)?;
            println!(
                "{} dataset: {} banks, {} samples each, master seed {}",
                ds.property(),
                ds.banks.len(),
                ds.samples(),
                ds.manifest.master_seed
            );
            for c in FaultClass::ALL {
                println!("  {c}: {}", ds.count(c));
            }
            Ok(Outcome::Success)
        }
        Command::Report(_) | Command::Replay(_) => bail!("nothing to report for this manifest"),
    }
}
