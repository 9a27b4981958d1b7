//! Fault isolation and fault diagnostics.
//!
//! Isolation trains the autoencoder on healthy banks only, sets a detection
//! threshold from the validation banks' reconstruction errors, and
//! attributes each test bank's error to its rods. Diagnostics trains the
//! 4-class classifier on a stratified split and scores the best-epoch
//! snapshot on the held-out banks.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, FitOutcome, ModelKind, ModelSpec, Params, Standardizer, TrainConfig, NUM_CLASSES};
use crate::numerics::Tensor;
use crate::seed::{self, Stream};
use crate::simdata::{Bank, Dataset, FaultClass, RODS_PER_BANK};

/// Healthy banks used to train and validate the isolation autoencoder.
pub const ISOLATION_TRAIN: usize = 9;
pub const ISOLATION_VAL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<Bank>,
    pub val: Vec<Bank>,
    pub test: Vec<Bank>,
}

/// 9 healthy banks for training, 3 for validation, every faulty bank for
/// testing. Healthy banks beyond the first 12 drawn also go to the test set.
pub fn split_isolation(ds: &Dataset, seed: u64) -> Result<Split> {
    split_isolation_sized(ds, seed, ISOLATION_TRAIN, ISOLATION_VAL)
}

pub fn split_isolation_sized(ds: &Dataset, seed: u64, n_train: usize, n_val: usize) -> Result<Split> {
    let mut healthy: Vec<usize> = (0..ds.banks.len())
        .filter(|&i| ds.banks[i].label == FaultClass::Healthy)
        .collect();
    if n_train == 0 || n_val == 0 || healthy.len() < n_train + n_val {
        return Err(Error::InsufficientData(format!(
            "isolation split needs {} healthy banks, dataset has {}",
            n_train + n_val,
            healthy.len()
        )));
    }
    healthy.shuffle(&mut seed::rng(seed::derive(seed, Stream::Split, 0)));
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.banks[i].clone()).collect::<Vec<_>>();
    let mut test_idx: Vec<usize> = healthy[n_train + n_val..].to_vec();
    test_idx.extend((0..ds.banks.len()).filter(|&i| ds.banks[i].label != FaultClass::Healthy));
    test_idx.sort_unstable();
    Ok(Split {
        train: pick(&healthy[..n_train]),
        val: pick(&healthy[n_train..n_train + n_val]),
        test: pick(&test_idx),
    })
}

/// Stratified 70/15/15 split.
///
/// Per class with `n` banks: `ceil(0.7 n)` go to training, capped at `n - 2`
/// so validation and test each get at least one bank. The remainder is
/// halved between validation and test; when it is odd, the extra bank goes
/// to validation for the 1st and 3rd included class and to test for the 2nd
/// and 4th, which balances the two held-out sets. Twelve banks per class
/// give 9/2/1, 9/1/2, 9/2/1, 9/1/2, i.e. 36/6/6.
///
/// With `include_healthy == false` only the three fault classes are split.
pub fn split_diagnostics(ds: &Dataset, seed: u64, include_healthy: bool) -> Result<Split> {
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let classes = FaultClass::ALL
        .into_iter()
        .filter(|c| include_healthy || *c != FaultClass::Healthy);
    for (pos, class) in classes.enumerate() {
        let mut idx: Vec<usize> = (0..ds.banks.len()).filter(|&i| ds.banks[i].label == class).collect();
        let n = idx.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "class {class} has {n} banks; the stratified split needs at least 3"
            )));
        }
        let (n_train, n_val, _) = diagnostics_counts(n, pos);
        idx.shuffle(&mut seed::rng(seed::derive(seed, Stream::Split, class.label() as u64 + 1)));
        let (train, rest) = idx.split_at(n_train);
        let (val, test) = rest.split_at(n_val);
        split.train.extend(train.iter().map(|&i| ds.banks[i].clone()));
        split.val.extend(val.iter().map(|&i| ds.banks[i].clone()));
        split.test.extend(test.iter().map(|&i| ds.banks[i].clone()));
    }
    Ok(split)
}

/// `(train, val, test)` for a class of `n >= 3` banks at position `pos`
/// among the included classes.
pub fn diagnostics_counts(n: usize, pos: usize) -> (usize, usize, usize) {
    let train = ((7 * n).div_ceil(10)).min(n - 2);
    let rest = n - train;
    let extra = rest % 2;
    let val = rest / 2 + if pos % 2 == 0 { extra } else { 0 };
    (train, val, rest - val)
}

/// `mean + 3 * std` (population standard deviation). With a single value
/// the threshold is `1.5 * max`.
pub fn compute_threshold(val_errors: &[f64]) -> Result<f64> {
    match val_errors {
        [] => Err(Error::InsufficientData("no validation errors for the threshold".into())),
        [x] => Ok(1.5 * x),
        xs => {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            Ok(mean + 3.0 * var.sqrt())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationResult {
    /// Mean squared residual over all rods and times.
    pub bank_error: f64,
    /// Per-rod mean squared residual over time.
    pub rod_contributions: Vec<f64>,
    /// `bank_error > threshold`.
    pub detected: bool,
    /// 1-based rod with the largest contribution (lowest index on ties).
    /// Computed for every bank so isolation can be scored independently of
    /// detection; see [`IsolationResult::isolated_rod`].
    pub flagged_rod: usize,
}

impl IsolationResult {
    /// The flagged rod, only when the bank was detected as anomalous.
    pub fn isolated_rod(&self) -> Option<usize> {
        self.detected.then_some(self.flagged_rod)
    }
}

/// Attribution from an input and its reconstruction (both `(T, 10)`, in
/// the same standardized space).
pub fn attribute(input: &Tensor, reconstruction: &Tensor, threshold: f64) -> Result<IsolationResult> {
    if input.shape() != reconstruction.shape() {
        return Err(Error::shape("reconstruction", input.shape(), reconstruction.shape()));
    }
    let (t, c) = input.dims2("isolation input")?;
    if c != RODS_PER_BANK {
        return Err(Error::shape("isolation input channels", RODS_PER_BANK, c));
    }
    let mut sums = vec![0.0; c];
    for (xr, yr) in input.data().chunks_exact(c).zip(reconstruction.data().chunks_exact(c)) {
        for ((s, x), y) in sums.iter_mut().zip(xr).zip(yr) {
            *s += (x - y) * (x - y);
        }
    }
    let rod_contributions: Vec<f64> = sums.iter().map(|s| s / t as f64).collect();
    let bank_error = rod_contributions.iter().sum::<f64>() / c as f64;
    let flagged_rod = rod_contributions
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > rod_contributions[best] { i } else { best })
        + 1;
    Ok(IsolationResult {
        bank_error,
        rod_contributions,
        detected: bank_error > threshold,
        flagged_rod,
    })
}

/// Reconstructs a raw bank with a trained autoencoder and attributes the
/// residual to its rods.
pub fn isolate(
    params: &Params,
    spec: &ModelSpec,
    standardizer: &Standardizer,
    bank: &Bank,
    threshold: f64,
) -> Result<IsolationResult> {
    if spec.kind != ModelKind::Autoencoder {
        return Err(Error::InvalidInput("isolation needs an autoencoder".into()));
    }
    if (bank.samples(), RODS_PER_BANK) != spec.input_shape {
        return Err(Error::shape("isolation bank", spec.input_shape, (bank.samples(), RODS_PER_BANK)));
    }
    let x = standardizer.apply(bank);
    let y = models::predict(spec, params, &x)?;
    attribute(&x, &y, threshold)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Rows: true class, columns: predicted class.
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: FaultClass, predicted: FaultClass) {
        self.counts[truth.label()][predicted.label()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [usize; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// 4x4 CSV with a header row and the true class in the first column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(FaultClass::ALL.iter().map(|c| c.to_string()));
        w.write_record(&header)?;
        for (class, row) in FaultClass::ALL.iter().zip(&self.counts) {
            let mut rec = vec![class.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn predict_class(params: &Params, spec: &ModelSpec, standardizer: &Standardizer, bank: &Bank) -> Result<FaultClass> {
    let probs = models::predict(spec, params, &standardizer.apply(bank))?;
    let p = probs.data();
    let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
    FaultClass::from_label(best)
}

/// Argmax prediction for every test bank (banks scored in parallel).
pub fn diagnose(
    params: &Params,
    spec: &ModelSpec,
    standardizer: &Standardizer,
    test: &[Bank],
) -> Result<(ConfusionMatrix, f64)> {
    if spec.kind != ModelKind::Classifier {
        return Err(Error::InvalidInput("diagnostics needs a classifier".into()));
    }
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let preds = test
        .par_iter()
        .map(|b| predict_class(params, spec, standardizer, b))
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::default();
    for (b, p) in test.iter().zip(preds) {
        cm.record(b.label, p);
    }
    let acc = cm.accuracy();
    Ok((cm, acc))
}

/// Which part of a split a scored bank came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredBank {
    pub role: SplitRole,
    pub batch_id: u32,
    pub label: FaultClass,
    /// 1-based ground-truth faulty rod, `None` for healthy banks.
    pub faulty_rod: Option<usize>,
    pub result: IsolationResult,
}

pub struct IsolationReport {
    pub spec: ModelSpec,
    pub fit: FitOutcome,
    pub threshold: f64,
    /// Validation banks first, then test banks.
    pub rows: Vec<ScoredBank>,
}

impl IsolationReport {
    pub fn test_rows(&self) -> impl Iterator<Item = &ScoredBank> {
        self.rows.iter().filter(|r| r.role == SplitRole::Test)
    }

    /// Fraction of faulty test banks whose top contributor is the known
    /// faulty rod.
    pub fn isolation_accuracy(&self) -> f64 {
        let faulty: Vec<_> = self.test_rows().filter(|r| r.label != FaultClass::Healthy).collect();
        let hits = faulty.iter().filter(|r| Some(r.result.flagged_rod) == r.faulty_rod).count();
        hits as f64 / faulty.len().max(1) as f64
    }

    /// Mean contribution per rod for each class, across validation (healthy)
    /// and test banks.
    pub fn class_mean_contributions(&self) -> BTreeMap<FaultClass, Vec<f64>> {
        let mut acc: BTreeMap<FaultClass, (Vec<f64>, usize)> = BTreeMap::new();
        for row in &self.rows {
            let e = acc.entry(row.label).or_insert_with(|| (vec![0.0; RODS_PER_BANK], 0));
            for (a, v) in e.0.iter_mut().zip(&row.result.rod_contributions) {
                *a += v;
            }
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (sum, n))| (k, sum.into_iter().map(|s| s / n as f64).collect()))
            .collect()
    }

    /// Columns: `split,batch,label,bank_error,rod1..rod10,detected,flagged_rod`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let mut header: Vec<String> = ["split", "batch", "label", "bank_error"].map(String::from).to_vec();
        header.extend((1..=RODS_PER_BANK).map(|r| format!("rod{r}")));
        header.extend(["detected".to_string(), "flagged_rod".to_string()]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                match row.role {
                    SplitRole::Val => "val".to_string(),
                    SplitRole::Test => "test".to_string(),
                },
                row.batch_id.to_string(),
                row.label.to_string(),
                row.result.bank_error.to_string(),
            ];
            rec.extend(row.result.rod_contributions.iter().map(|v| v.to_string()));
            rec.push(row.result.detected.to_string());
            rec.push(row.result.flagged_rod.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Full isolation pipeline: split, fit on healthy banks, threshold from the
/// validation banks, score validation and test banks with the final
/// parameters.
pub fn run_isolation(ds: &Dataset, cfg: &TrainConfig, split_seed: u64) -> Result<IsolationReport> {
    let split = split_isolation(ds, split_seed)?;
    isolation_on_split(ds, &split, cfg)
}

pub fn isolation_on_split(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<IsolationReport> {
    let spec = models::build_autoencoder(ds.samples())?;
    let params = models::init_params(&spec, cfg.init_seed)?;
    let fit = models::fit(&spec, params, &split.train, &split.val, cfg)?;
    let score = |banks: &[Bank], role: SplitRole, threshold: f64| -> Result<Vec<ScoredBank>> {
        banks
            .par_iter()
            .map(|b| {
                Ok(ScoredBank {
                    role,
                    batch_id: b.batch_id,
                    label: b.label,
                    faulty_rod: b.faulty_rod_index,
                    result: isolate(&fit.final_params, &spec, &fit.standardizer, b, threshold)?,
                })
            })
            .collect()
    };
    let mut rows = score(&split.val, SplitRole::Val, f64::INFINITY)?;
    let val_errors: Vec<f64> = rows.iter().map(|r| r.result.bank_error).collect();
    let threshold = compute_threshold(&val_errors)?;
    for r in &mut rows {
        r.result.detected = r.result.bank_error > threshold;
    }
    rows.extend(score(&split.test, SplitRole::Test, threshold)?);
    Ok(IsolationReport {
        spec,
        fit,
        threshold,
        rows,
    })
}

pub struct DiagnosticsReport {
    pub spec: ModelSpec,
    pub fit: FitOutcome,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

/// Full diagnostics pipeline: stratified split, fit, test with the
/// best-epoch parameters.
pub fn run_diagnostics(ds: &Dataset, cfg: &TrainConfig, split_seed: u64, include_healthy: bool) -> Result<DiagnosticsReport> {
    let split = split_diagnostics(ds, split_seed, include_healthy)?;
    diagnostics_on_split(ds, &split, cfg)
}

pub fn diagnostics_on_split(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<DiagnosticsReport> {
    let spec = models::build_classifier(ds.samples())?;
    let params = models::init_params(&spec, cfg.init_seed)?;
    let fit = models::fit(&spec, params, &split.train, &split.val, cfg)?;
    let (confusion, accuracy) = diagnose(&fit.best_params, &spec, &fit.standardizer, &split.test)?;
    Ok(DiagnosticsReport {
        spec,
        fit,
        confusion,
        accuracy,
    })
}
