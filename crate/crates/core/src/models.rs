//! Model stacks, parameter initialization and the training loop.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, cross_entropy_loss, mse_loss, Activation, LayerKind, Padding, Tensor};
use crate::optim::{self, OptimizerConfig, OptimizerState};
use crate::seed::{self, Stream};
use crate::simdata::{Bank, FaultClass, Property, RODS_PER_BANK};

pub const NUM_CLASSES: usize = 4;
const MIN_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Autoencoder,
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// `(time, channels)`.
    pub input_shape: (usize, usize),
    pub layers: Vec<LayerKind>,
}

fn conv(out_channels: usize, kernel: usize, activation: Activation) -> LayerKind {
    LayerKind::Conv1D {
        out_channels,
        kernel,
        stride: 1,
        padding: Padding::Same,
        activation,
    }
}

fn encoder() -> Vec<LayerKind> {
    vec![
        conv(16, 7, Activation::Relu),
        LayerKind::MaxPool1D { size: 4 },
        conv(8, 5, Activation::Relu),
        LayerKind::MaxPool1D { size: 4 },
        conv(4, 3, Activation::Relu),
    ]
}

impl ModelSpec {
    /// Validates the stack and checks the kind's output contract.
    pub fn new(kind: ModelKind, input_shape: (usize, usize), layers: Vec<LayerKind>) -> Result<Self> {
        let spec = Self {
            kind,
            input_shape,
            layers,
        };
        let out = spec.output_shape()?;
        match kind {
            ModelKind::Autoencoder if out != input_shape => {
                return Err(Error::shape("autoencoder output", input_shape, out));
            }
            ModelKind::Classifier => {
                if out != (1, NUM_CLASSES) || spec.layers.last() != Some(&LayerKind::Softmax) {
                    return Err(Error::shape("classifier output", "(1, 4) softmax", out));
                }
            }
            _ => {}
        }
        Ok(spec)
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut shapes = vec![self.input_shape];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<(usize, usize)> {
        Ok(*self.shapes()?.last().expect("non-empty"))
    }

    pub fn param_shapes(&self) -> Result<Vec<Vec<Vec<usize>>>> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| l.param_shapes(s.1))
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .flatten()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

fn check_length(t: usize) -> Result<()> {
    if t < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "sequence length {t} too short for the pooling chain (need >= {MIN_SAMPLES})"
        )));
    }
    Ok(())
}

/// Convolutional autoencoder for `(t, 10)` banks.
///
/// The two pool-by-4 stages use ceil mode, so the bottleneck has
/// `ceil(t / 16)` steps. The decoder upsamples back to
/// `16 * ceil(ceil(t / 4) / 4) >= t` steps and keeps the first `t`.
pub fn build_autoencoder(t: usize) -> Result<ModelSpec> {
    check_length(t)?;
    let mut layers = encoder();
    layers.extend([
        LayerKind::UpSample1D { factor: 4 },
        conv(8, 5, Activation::Relu),
        LayerKind::UpSample1D { factor: 4 },
        LayerKind::Crop1D { length: t },
        conv(16, 7, Activation::Relu),
        conv(RODS_PER_BANK, 7, Activation::Linear),
    ]);
    ModelSpec::new(ModelKind::Autoencoder, (t, RODS_PER_BANK), layers)
}

/// Encoder, one upsampling decoder block, global average pooling and a
/// 4-way softmax head.
pub fn build_classifier(t: usize) -> Result<ModelSpec> {
    check_length(t)?;
    let mut layers = encoder();
    layers.extend([
        LayerKind::UpSample1D { factor: 4 },
        conv(16, 5, Activation::Relu),
        LayerKind::GlobalAvgPool1D,
        LayerKind::Dense {
            units: NUM_CLASSES,
            activation: Activation::Linear,
        },
        LayerKind::Softmax,
    ]);
    ModelSpec::new(ModelKind::Classifier, (t, RODS_PER_BANK), layers)
}

/// Trainable tensors, grouped per layer (empty for parameterless layers).
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Vec<Tensor>>,
}

impl Params {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flatten()
    }

    pub fn len(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Each layer draws from its own stream derived from `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Params> {
    let shapes = spec.shapes()?;
    let layers = spec
        .layers
        .iter()
        .zip(&shapes)
        .enumerate()
        .map(|(i, (layer, &(_, c)))| {
            let mut rng = seed::rng(seed::derive(seed, Stream::Init, i as u64));
            let fans = layer.fans(c);
            layer
                .param_shapes(c)
                .into_iter()
                .enumerate()
                .map(|(j, shape)| match (j, fans) {
                    (0, Some((fan_in, fan_out))) => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        let n = shape.iter().product();
                        let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
                        Tensor::new(shape, data)
                    }
                    _ => Ok(Tensor::zeros(&shape)),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Params { layers })
}

fn check_params(spec: &ModelSpec, params: &Params) -> Result<()> {
    let expected = spec.param_shapes()?;
    let actual: Vec<Vec<Vec<usize>>> = params
        .layers
        .iter()
        .map(|l| l.iter().map(|t| t.shape().to_vec()).collect())
        .collect();
    if expected != actual {
        return Err(Error::shape("model parameters", "shapes from model spec", "different shapes"));
    }
    Ok(())
}

/// Runs layers `0..upto` and returns every activation, input first.
fn trace(spec: &ModelSpec, params: &Params, input: Tensor, upto: usize) -> Result<Vec<Tensor>> {
    let mut acts = Vec::with_capacity(upto + 1);
    acts.push(input);
    for (layer, p) in spec.layers[..upto].iter().zip(&params.layers) {
        let next = numerics::forward(layer, p, acts.last().expect("non-empty"))?;
        acts.push(next);
    }
    Ok(acts)
}

/// Full forward pass (the classifier output includes the softmax).
pub fn predict(spec: &ModelSpec, params: &Params, input: &Tensor) -> Result<Tensor> {
    if input.shape() != [spec.input_shape.0, spec.input_shape.1] {
        return Err(Error::shape("model input", spec.input_shape, input.shape()));
    }
    check_params(spec, params)?;
    let mut acts = trace(spec, params, input.clone(), spec.layers.len())?;
    Ok(acts.pop().expect("non-empty"))
}

/// Number of layers whose output feeds the loss. The classifier loss works
/// on logits, so its trailing softmax is skipped.
fn loss_depth(spec: &ModelSpec) -> usize {
    match spec.kind {
        ModelKind::Autoencoder => spec.layers.len(),
        ModelKind::Classifier => spec.layers.len() - 1,
    }
}

fn sample_loss(spec: &ModelSpec, params: &Params, input: &Tensor, label: FaultClass) -> Result<f64> {
    let mut acts = trace(spec, params, input.clone(), loss_depth(spec))?;
    let out = acts.pop().expect("non-empty");
    Ok(match spec.kind {
        ModelKind::Autoencoder => mse_loss(&out, input)?.0,
        ModelKind::Classifier => cross_entropy_loss(&out, label.label())?.0,
    })
}

/// Loss of one sample and the gradient for every parameter tensor.
fn sample_gradients(
    spec: &ModelSpec,
    params: &Params,
    input: &Tensor,
    label: FaultClass,
) -> Result<(f64, Vec<Vec<Tensor>>)> {
    let depth = loss_depth(spec);
    let acts = trace(spec, params, input.clone(), depth)?;
    let (loss, mut upstream) = match spec.kind {
        ModelKind::Autoencoder => mse_loss(&acts[depth], input)?,
        ModelKind::Classifier => cross_entropy_loss(&acts[depth], label.label())?,
    };
    let mut grads = vec![Vec::new(); spec.layers.len()];
    for i in (0..depth).rev() {
        let g = numerics::backward_with_output(&spec.layers[i], &params.layers[i], &acts[i], &acts[i + 1], &upstream)?;
        grads[i] = g.params;
        upstream = g.input;
    }
    Ok((loss, grads))
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics over every time step of every bank, per rod column. A
    /// column with zero spread keeps unit scale.
    pub fn fit(banks: &[Bank]) -> Result<Self> {
        let first = banks
            .first()
            .ok_or_else(|| Error::InsufficientData("no banks to standardize".into()))?;
        let c = RODS_PER_BANK;
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for b in banks {
            if b.property != first.property || b.samples() != first.samples() {
                return Err(Error::InvalidInput("banks differ in property or length".into()));
            }
            for row in b.data.chunks_exact(c) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            count += b.samples();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; c];
        for b in banks {
            for row in b.data.chunks_exact(c) {
                for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, bank: &Bank) -> Tensor {
        let data = bank
            .data
            .chunks_exact(RODS_PER_BANK)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.std)
                    .map(|((v, m), s)| (v - m) / s)
            })
            .collect();
        Tensor::from_matrix(bank.samples(), RODS_PER_BANK, data).expect("bank data is T x 10")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub optimizer: OptimizerConfig,
}

/// Default epoch budgets: isolation on current 150, isolation on torque
/// 100, diagnostics 50.
pub fn default_epochs(kind: ModelKind, property: Property) -> usize {
    match (kind, property) {
        (ModelKind::Autoencoder, Property::Current) => 150,
        (ModelKind::Autoencoder, Property::Torque) => 100,
        (ModelKind::Classifier, _) => 50,
    }
}

impl TrainConfig {
    pub fn new(epochs: usize, optimizer: OptimizerConfig) -> Self {
        Self {
            epochs,
            batch_size: 3,
            init_seed: 0,
            shuffle_seed: 0,
            optimizer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        self.optimizer.validate()
    }
}

/// Per-epoch losses. Epoch numbers are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub final_val_loss: f64,
    pub min_val_loss: f64,
}

impl TrainHistory {
    /// Builds the summary fields from raw per-epoch losses. The best epoch
    /// is the first one attaining the minimum validation loss.
    pub fn from_losses(train_loss: Vec<f64>, val_loss: Vec<f64>) -> Self {
        let (best_idx, min) = val_loss
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) });
        Self {
            final_val_loss: *val_loss.last().unwrap_or(&f64::NAN),
            min_val_loss: min,
            best_epoch: best_idx + 1,
            train_loss,
            val_loss,
        }
    }

    /// Columns: `epoch,train_loss,val_loss` (1-based epochs).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            w.write_record([(i + 1).to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub final_params: Params,
    /// Snapshot at the epoch with the lowest validation loss.
    pub best_params: Params,
    pub history: TrainHistory,
    /// Training-set statistics applied to every split.
    pub standardizer: Standardizer,
    /// Optimizer steps taken.
    pub steps: u64,
}

fn check_banks(spec: &ModelSpec, banks: &[Bank], property: Property, name: &str) -> Result<()> {
    if banks.is_empty() {
        return Err(Error::InsufficientData(format!("empty {name} split")));
    }
    for b in banks {
        if b.property != property {
            return Err(Error::InvalidInput(format!(
                "mixed properties: {name} split holds {} and {}",
                property, b.property
            )));
        }
        if (b.samples(), RODS_PER_BANK) != spec.input_shape {
            return Err(Error::shape(format!("{name} bank"), spec.input_shape, (b.samples(), RODS_PER_BANK)));
        }
    }
    Ok(())
}

/// Mean loss over a split, evaluated in parallel and summed in bank order.
pub fn evaluate(spec: &ModelSpec, params: &Params, inputs: &[(Tensor, FaultClass)]) -> Result<f64> {
    let losses = inputs
        .par_iter()
        .map(|(x, y)| sample_loss(spec, params, x, *y))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mini-batch training.
///
/// Each epoch shuffles the training banks with a stream derived from
/// `shuffle_seed` and the epoch number, averages gradients over each
/// mini-batch and takes one optimizer step per mini-batch
/// (`ceil(n / batch_size)` steps per epoch). The recorded training loss is
/// the mean of the per-bank losses seen during the epoch, before each
/// step; the validation loss is evaluated on the full validation split at
/// the end of the epoch.
pub fn fit(spec: &ModelSpec, params: Params, train: &[Bank], val: &[Bank], cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    check_params(spec, &params)?;
    let property = train
        .first()
        .ok_or_else(|| Error::InsufficientData("empty training split".into()))?
        .property;
    check_banks(spec, train, property, "training")?;
    check_banks(spec, val, property, "validation")?;

    let standardizer = Standardizer::fit(train)?;
    let prep = |banks: &[Bank]| -> Vec<(Tensor, FaultClass)> {
        banks.iter().map(|b| (standardizer.apply(b), b.label)).collect()
    };
    let train_set = prep(train);
    let val_set = prep(val);

    let mut params = params;
    let mut state = OptimizerState::new(params.tensors());
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut train_hist = Vec::with_capacity(cfg.epochs);
    let mut val_hist = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed::derive(cfg.shuffle_seed, Stream::Epoch, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| sample_gradients(spec, &params, &train_set[i].0, train_set[i].1))
                .collect::<Result<Vec<_>>>()?;
            let mut total: Option<Vec<Vec<Tensor>>> = None;
            for (loss, grads) in results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss at epoch {}, batch {}",
                        epoch + 1,
                        bi + 1
                    )));
                }
                loss_sum += loss;
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().flatten().zip(grads.iter().flatten()) {
                            a.add_assign(g);
                        }
                    }
                }
            }
            let mut grads = total.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| g.scale(inv));
            let grad_refs: Vec<&Tensor> = grads.iter().flatten().collect();
            let mut param_refs: Vec<&mut Tensor> = params.tensors_mut().collect();
            optim::step(&cfg.optimizer, &mut state, &mut param_refs, &grad_refs).map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::NonFinite(format!("{what} at epoch {}, batch {}", epoch + 1, bi + 1))
                }
                other => other,
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = evaluate(spec, &params, &val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {}", epoch + 1)));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
        }
        train_hist.push(train_loss);
        val_hist.push(val_loss);
    }

    Ok(FitOutcome {
        final_params: params,
        best_params: best,
        history: TrainHistory::from_losses(train_hist, val_hist),
        standardizer,
        steps: state.t,
    })
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    spec: ModelSpec,
    standardizer: Standardizer,
    shapes: Vec<Vec<Vec<usize>>>,
}

/// Writes `model.json` (spec, standardizer, tensor shapes) and `params.bin`
/// (every tensor, little-endian `f64`, in layer order) into `dir`.
pub fn write_params(dir: &Path, spec: &ModelSpec, params: &Params, standardizer: &Standardizer) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let saved = SavedModel {
        spec: spec.clone(),
        standardizer: standardizer.clone(),
        shapes: params
            .layers
            .iter()
            .map(|l| l.iter().map(|t| t.shape().to_vec()).collect())
            .collect(),
    };
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&saved)? + "\n").map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = params.tensors().flat_map(|t| t.data().iter().flat_map(|v| v.to_le_bytes())).collect();
    let path = dir.join("params.bin");
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn read_params(dir: &Path) -> Result<(ModelSpec, Params, Standardizer)> {
    let path = dir.join("model.json");
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let saved: SavedModel = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    let path = dir.join("params.bin");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let total: usize = saved.shapes.iter().flatten().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Corrupt {
            file: path,
            expected: total,
            actual: bytes.len(),
        });
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let layers = saved
        .shapes
        .iter()
        .map(|l| {
            l.iter()
                .map(|s| Tensor::new(s.clone(), values.by_ref().take(s.iter().product()).collect()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let params = Params { layers };
    check_params(&saved.spec, &params)?;
    Ok((saved.spec, params, saved.standardizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;
    use crate::simdata::{generate_dataset, GenConfig};

    #[test]
    fn autoencoder_shapes() {
        let spec = build_autoencoder(10_001).unwrap();
        let shapes = spec.shapes().unwrap();
        assert_eq!(*shapes.last().unwrap(), (10_001, 10));
        // input of the first UpSample is the bottleneck
        assert_eq!(shapes[5], (10_001usize.div_ceil(16), 4));
        assert_eq!(spec.param_count().unwrap(), build_autoencoder(10_001).unwrap().param_count().unwrap());
        assert!(build_autoencoder(63).is_err());
        for t in [64, 65, 100, 1001, 2001] {
            assert_eq!(build_autoencoder(t).unwrap().output_shape().unwrap(), (t, 10));
        }
    }

    #[test]
    fn autoencoder_forward_full_length() {
        let spec = build_autoencoder(10_001).unwrap();
        let params = init_params(&spec, 0).unwrap();
        let y = predict(&spec, &params, &Tensor::zeros(&[10_001, 10])).unwrap();
        assert_eq!(y.shape(), &[10_001, 10]);
    }

    #[test]
    fn classifier_outputs_probabilities() {
        let spec = build_classifier(200).unwrap();
        let mut params = init_params(&spec, 1).unwrap();
        let x = Tensor::from_matrix(200, 10, (0..2000).map(|i| ((i * 7919) % 113) as f64 / 50.0 - 1.0).collect())
            .unwrap();
        let p = predict(&spec, &params, &x).unwrap();
        assert_eq!(p.shape(), &[1, 4]);
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, predict(&spec, &params, &x).unwrap());

        let dense = spec.layers.len() - 2;
        params.layers[dense][0] = Tensor::zeros(params.layers[dense][0].shape());
        let p = predict(&spec, &params, &x).unwrap();
        assert_eq!(p.data(), &[0.25; 4]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = build_autoencoder(128).unwrap();
        let a = init_params(&spec, 3).unwrap();
        assert_eq!(a, init_params(&spec, 3).unwrap());
        assert_ne!(a, init_params(&spec, 4).unwrap());
        let shapes = spec.shapes().unwrap();
        for ((layer, p), s) in spec.layers.iter().zip(&a.layers).zip(&shapes) {
            if let Some((fi, fo)) = layer.fans(s.1) {
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                assert!(p[0].data().iter().all(|w| w.abs() <= limit));
                assert!(p[1].data().iter().all(|b| *b == 0.0));
            }
        }
    }

    fn tiny_data(property: Property) -> Vec<Bank> {
        let cfg = GenConfig::default().with_sample_rate(10.0);
        generate_dataset(property, 3, &cfg, 5).unwrap().banks
    }

    #[test]
    fn single_epoch_history() {
        let banks = tiny_data(Property::Current);
        let spec = build_autoencoder(banks[0].samples()).unwrap();
        let params = init_params(&spec, 0).unwrap();
        let cfg = TrainConfig::new(1, OptimizerConfig::default_for(OptimizerKind::Adam));
        let out = fit(&spec, params, &banks[..4], &banks[4..8], &cfg).unwrap();
        assert_eq!(out.history.val_loss.len(), 1);
        assert_eq!(out.history.train_loss.len(), 1);
        assert_eq!(out.history.final_val_loss, out.history.min_val_loss);
        assert_eq!(out.history.best_epoch, 1);
    }

    #[test]
    fn fit_is_reproducible_and_learns() {
        let banks = tiny_data(Property::Torque);
        let healthy: Vec<Bank> = banks.iter().filter(|b| b.label == FaultClass::Healthy).cloned().collect();
        let spec = build_autoencoder(banks[0].samples()).unwrap();
        let mut cfg = TrainConfig::new(30, OptimizerConfig::default_for(OptimizerKind::Nadam));
        cfg.shuffle_seed = 8;
        let run = || fit(&spec, init_params(&spec, 2).unwrap(), &healthy[..2], &healthy[2..], &cfg).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.history, b.history);
        assert_eq!(a.final_params, b.final_params);
        let h = &a.history;
        assert!(h.val_loss.iter().all(|v| v.is_finite()));
        assert!(h.min_val_loss < h.val_loss[0]);
        assert!(h.train_loss[h.best_epoch - 1] < h.train_loss[0]);
        assert!(h.min_val_loss <= h.final_val_loss);
        assert_eq!(h.val_loss[h.best_epoch - 1], h.min_val_loss);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let banks = tiny_data(Property::Current);
        let torque = tiny_data(Property::Torque);
        let spec = build_autoencoder(banks[0].samples()).unwrap();
        let cfg = TrainConfig::new(1, OptimizerConfig::default_for(OptimizerKind::Sgd));
        let p = || init_params(&spec, 0).unwrap();
        assert!(fit(&spec, p(), &banks[..2], &[], &cfg).is_err());
        assert!(fit(&spec, p(), &[], &banks[..2], &cfg).is_err());
        let err = fit(&spec, p(), &banks[..2], &torque[..2], &cfg).unwrap_err();
        assert!(err.to_string().contains("mixed"));
        let mut bad = cfg.clone();
        bad.epochs = 0;
        assert!(fit(&spec, p(), &banks[..2], &banks[2..4], &bad).is_err());
    }

    #[test]
    fn diverging_training_reports_non_finite() {
        let banks = tiny_data(Property::Current);
        let spec = build_autoencoder(banks[0].samples()).unwrap();
        let mut opt = OptimizerConfig::default_for(OptimizerKind::Sgd);
        opt.eta = 1e200;
        let cfg = TrainConfig::new(5, opt);
        let err = fit(&spec, init_params(&spec, 0).unwrap(), &banks[..3], &banks[3..6], &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn standardizer_ignores_validation_banks() {
        let banks = tiny_data(Property::Current);
        let a = Standardizer::fit(&banks[..4]).unwrap();
        let mut perturbed = banks.clone();
        perturbed[6].data.iter_mut().for_each(|v| *v += 100.0);
        assert_eq!(a, Standardizer::fit(&perturbed[..4]).unwrap());
        let z = a.apply(&banks[0]);
        assert_eq!(z.shape(), &[banks[0].samples(), 10]);
    }

    #[test]
    fn one_step_per_mini_batch() {
        let banks = tiny_data(Property::Current);
        let spec = build_autoencoder(banks[0].samples()).unwrap();
        for (bs, per_epoch) in [(1usize, 7u64), (3, 3), (7, 1), (10, 1)] {
            let mut cfg = TrainConfig::new(2, OptimizerConfig::default_for(OptimizerKind::Adam));
            cfg.batch_size = bs;
            let out = fit(&spec, init_params(&spec, 0).unwrap(), &banks[..7], &banks[7..], &cfg).unwrap();
            assert_eq!(out.steps, 2 * per_epoch);
        }
    }

    #[test]
    fn params_round_trip() {
        let spec = build_classifier(100).unwrap();
        let params = init_params(&spec, 9).unwrap();
        let st = Standardizer {
            mean: vec![0.5; 10],
            std: vec![2.0; 10],
        };
        let dir = tempfile::tempdir().unwrap();
        write_params(dir.path(), &spec, &params, &st).unwrap();
        let (s2, p2, st2) = read_params(dir.path()).unwrap();
        assert_eq!((s2, p2, st2), (spec, params, st));
    }
}
