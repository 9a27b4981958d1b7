use std::collections::BTreeMap;
use std::fs;

use rodbench::bench::{self, SweepOptions, Task, WorkloadSpec};
use rodbench::optim::OptimizerKind;
use rodbench::simdata::{generate_dataset, Dataset, GenConfig, Property};

fn dataset(property: Property) -> Dataset {
    let cfg = GenConfig::default().with_sample_rate(10.0);
    generate_dataset(property, 12, &cfg, 11).unwrap()
}

fn spec(task: Task, kind: OptimizerKind) -> WorkloadSpec {
    let mut s = WorkloadSpec::new(task, Property::Current, kind, 3);
    s.n_runs = 4;
    s.epochs = 3;
    s
}

#[test]
fn sweep_is_independent_of_chunking() {
    let ds = dataset(Property::Current);
    let s = spec(Task::Isolation, OptimizerKind::Adam);
    let one = bench::run_workload(&s, &ds, &SweepOptions { sink: None, chunk: 1 }).unwrap();
    let all = bench::run_workload(&s, &ds, &SweepOptions { sink: None, chunk: 4 }).unwrap();
    assert_eq!(one, all);
    assert_eq!(one.len(), 4);
    for (i, r) in one.iter().enumerate() {
        assert_eq!(r.run_index, i);
        assert!(!r.failed());
    }
    let seeds: std::collections::BTreeSet<u64> = one.iter().map(|r| r.init_seed).collect();
    assert_eq!(seeds.len(), 4);
}

#[test]
fn optimizers_share_run_seeds() {
    let ds = dataset(Property::Current);
    let a = bench::run_workload(&spec(Task::Isolation, OptimizerKind::Sgd), &ds, &SweepOptions::default()).unwrap();
    let b = bench::run_workload(&spec(Task::Isolation, OptimizerKind::Nadam), &ds, &SweepOptions::default()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.init_seed, x.shuffle_seed), (y.init_seed, y.shuffle_seed));
        assert_ne!(x.history, y.history);
    }
}

#[test]
fn metric_follows_task() {
    let ds = dataset(Property::Current);
    for task in [Task::Isolation, Task::Diagnostics] {
        let mut s = spec(task, OptimizerKind::RmsProp);
        s.n_runs = 1;
        let r = &bench::run_workload(&s, &ds, &SweepOptions::default()).unwrap()[0];
        let h = r.history.as_ref().unwrap();
        let expected = match task {
            Task::Isolation => h.final_val_loss,
            Task::Diagnostics => h.min_val_loss,
        };
        assert_eq!(r.metric, Some(expected));
    }
}

#[test]
fn sink_resumes_without_retraining() {
    let ds = dataset(Property::Current);
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("runs.jsonl");
    let opts = SweepOptions { sink: Some(sink.clone()), chunk: 1 };

    let mut s = spec(Task::Isolation, OptimizerKind::Adam);
    s.n_runs = 2;
    let first = bench::run_workload(&s, &ds, &opts).unwrap();
    s.n_runs = 4;
    let full = bench::run_workload(&s, &ds, &opts).unwrap();
    assert_eq!(&full[..2], &first[..]);
    assert_eq!(full, bench::run_workload(&s, &ds, &SweepOptions::default()).unwrap());
    assert_eq!(bench::read_runs(&sink).unwrap().len(), 4);

    // a rerun only reads
    let before = fs::read(&sink).unwrap();
    assert_eq!(bench::run_workload(&s, &ds, &opts).unwrap(), full);
    assert_eq!(fs::read(&sink).unwrap(), before);
}

#[test]
fn truncated_sink_line_is_retrained() {
    let ds = dataset(Property::Current);
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("runs.jsonl");
    let opts = SweepOptions { sink: Some(sink.clone()), chunk: 2 };
    let s = spec(Task::Isolation, OptimizerKind::Sgd);
    let full = bench::run_workload(&s, &ds, &opts).unwrap();

    let text = fs::read_to_string(&sink).unwrap();
    let cut = text.len() - text.lines().last().unwrap().len() / 2 - 1;
    fs::write(&sink, &text[..cut]).unwrap();
    assert_eq!(bench::read_runs(&sink).unwrap().len(), 3);
    assert_eq!(bench::run_workload(&s, &ds, &opts).unwrap(), full);
    assert_eq!(fs::read_to_string(&sink).unwrap(), text);
}

#[test]
fn foreign_sink_is_rejected() {
    let ds = dataset(Property::Current);
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("runs.jsonl");
    let opts = SweepOptions { sink: Some(sink.clone()), chunk: 0 };
    let mut s = spec(Task::Isolation, OptimizerKind::Adam);
    s.n_runs = 1;
    bench::run_workload(&s, &ds, &opts).unwrap();
    s.epochs = 4;
    assert!(bench::run_workload(&s, &ds, &opts).is_err());
}

#[test]
fn property_mismatch_is_rejected() {
    let ds = dataset(Property::Torque);
    assert!(bench::run_workload(&spec(Task::Isolation, OptimizerKind::Adam), &ds, &SweepOptions::default()).is_err());
}

#[test]
fn ranking_and_runs_study_from_a_sweep() {
    let ds = dataset(Property::Current);
    let mut records = Vec::new();
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        records.extend(bench::run_workload(&spec(Task::Isolation, kind), &ds, &SweepOptions::default()).unwrap());
    }
    let grouped = bench::group_by_optimizer(&records);
    assert_eq!(grouped.len(), 2);
    let ranking = bench::select_best(&grouped).unwrap();
    assert_eq!(ranking.len(), 2);
    assert!(ranking.iter().all(|e| e.runs == 4 && e.failed == 0));

    let rows = bench::effect_of_runs(&grouped, &[1, 4]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].winner(), ranking[0].optimizer);
    let first: BTreeMap<OptimizerKind, Vec<_>> =
        grouped.iter().map(|(k, v)| (*k, v[..1].to_vec())).collect();
    assert_eq!(rows[0].winner(), bench::select_best(&first).unwrap()[0].optimizer);

    let dir = tempfile::tempdir().unwrap();
    bench::write_ranking_csv(&ranking, &dir.path().join("summary.csv")).unwrap();
    bench::write_runs_study_csv(&rows, &dir.path().join("study.csv")).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
