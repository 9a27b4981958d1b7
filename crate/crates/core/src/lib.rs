//! Fault isolation and fault diagnostics for banks of fine-motion control-rod
//! drive servomotors, and a harness for comparing first-order optimizers
//! (SGD, RMSProp, Adam, Nadam) across many seeded training runs.
//!
//! The crate is organized bottom-up:
//!
//! - [`simdata`]: synthetic current/torque bank generator and its on-disk format.
//! - [`numerics`]: dense tensors, 1D-CNN layers with analytic gradients, losses.
//! - [`optim`]: the four optimizer update rules.
//! - [`models`]: autoencoder and classifier stacks and the training loop.
//! - [`fdd`]: isolation (reconstruction-error attribution) and diagnostics
//!   (4-class classification) tasks, with their dataset splits.
//! - [`bench`]: multi-run sweeps, box statistics, ranking and the
//!   effect-of-runs study.

pub mod bench;
pub mod error;
pub mod fdd;
pub mod models;
pub mod numerics;
pub mod optim;
pub mod seed;
pub mod simdata;

pub use error::{Error, Result};
