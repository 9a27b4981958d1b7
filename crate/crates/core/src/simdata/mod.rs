//! Synthetic servomotor bank generator.
//!
//! Each rod follows a two-demand position profile: an underdamped
//! second-order step response toward `demand1_pos_cm` at `demand1_time_s`
//! and toward `demand2_pos_cm` at `demand2_time_s`. The load torque is the
//! nominal load plus a term proportional to rod speed, so the motor does
//! extra work only while the rods move:
//!
//! ```text
//! L(t) = L0 * (1 + motion_load_gain * |dp/dt|) + fault load
//! I(t) = L(t) / (k_torque * flux) + short-circuit ripple
//! T(t) = k_torque * flux * I(t)
//! ```
//!
//! Faults: `Jam` is a step in load at `jam_onset_s`, `Wear` a ramp in load
//! from zero to `wear_ramp_frac * L0` at the end of the run, and
//! `ShortCircuit` a sinusoidal ripple on the current after `sc_onset_s`.
//! Gaussian measurement noise with standard deviation
//! `noise_sigma_frac * range(series)` is then added to current and torque
//! independently.
//!
//! All randomness is derived from one master seed (see [`crate::seed`]).

mod io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seed::{self, Stream};

pub use io::{read_dataset, write_bank_csv, write_dataset, SCHEMA_VERSION};

pub const RODS_PER_BANK: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultClass {
    Healthy,
    ShortCircuit,
    /// Ball-screw jam: step increase in load.
    Jam,
    /// Ball-screw wear: ramp increase in load.
    Wear,
}

impl FaultClass {
    pub const ALL: [FaultClass; 4] = [
        FaultClass::Healthy,
        FaultClass::ShortCircuit,
        FaultClass::Jam,
        FaultClass::Wear,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Result<Self> {
        Self::ALL
            .get(label)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("fault label {label} not in 0..4")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultClass::Healthy => "healthy",
            FaultClass::ShortCircuit => "shortcircuit",
            FaultClass::Jam => "jam",
            FaultClass::Wear => "wear",
        }
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Current,
    Torque,
}

impl Property {
    pub fn as_str(self) -> &'static str {
        match self {
            Property::Current => "current",
            Property::Torque => "torque",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "current" => Ok(Property::Current),
            "torque" => Ok(Property::Torque),
            other => Err(Error::config("property", format!("unknown property {other:?}"))),
        }
    }
}

/// Observation window and commanded motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub demand1_time_s: f64,
    pub demand1_pos_cm: f64,
    pub demand2_time_s: f64,
    pub demand2_pos_cm: f64,
    pub natural_freq_rad_s: f64,
    pub damping_ratio: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            sample_rate_hz: 1000.0,
            demand1_time_s: 1.0,
            demand1_pos_cm: 1.735,
            demand2_time_s: 5.0,
            demand2_pos_cm: 3.47,
            natural_freq_rad_s: 6.0,
            damping_ratio: 0.5,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("{v} must be > 0")))
            }
        };
        positive("duration_s", self.duration_s)?;
        positive("sample_rate_hz", self.sample_rate_hz)?;
        positive("natural_freq_rad_s", self.natural_freq_rad_s)?;
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 1.0) {
            return Err(Error::config(
                "damping_ratio",
                format!("{} not in (0, 1)", self.damping_ratio),
            ));
        }
        if !(self.demand1_time_s > 0.0) {
            return Err(Error::config("demand1_time_s", "must be > 0"));
        }
        if !(self.demand1_time_s < self.demand2_time_s) {
            return Err(Error::config("demand2_time_s", "must be after demand1_time_s"));
        }
        if !(self.demand2_time_s < self.duration_s) {
            return Err(Error::config("demand2_time_s", "must be before duration_s"));
        }
        if !self.demand1_pos_cm.is_finite() || !self.demand2_pos_cm.is_finite() {
            return Err(Error::config("demand_pos_cm", "must be finite"));
        }
        Ok(())
    }

    /// Samples per rod, endpoints included.
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize + 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate_hz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RodParams {
    /// Torque constant, N·m/(Wb·A).
    pub k_torque: f64,
    /// Magnetic flux, Wb.
    pub flux: f64,
    pub nominal_load_nm: f64,
    /// Noise standard deviation as a fraction of each series' range.
    pub noise_sigma_frac: f64,
    /// Extra load per unit rod speed, as a fraction of nominal load per cm/s.
    pub motion_load_gain: f64,
}

impl Default for RodParams {
    fn default() -> Self {
        Self {
            k_torque: 1.0,
            flux: 1.0,
            nominal_load_nm: 1.0,
            noise_sigma_frac: 0.01,
            motion_load_gain: 0.05,
        }
    }
}

impl RodParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("k_torque", self.k_torque),
            ("flux", self.flux),
            ("nominal_load_nm", self.nominal_load_nm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be > 0")));
            }
        }
        if !(self.noise_sigma_frac >= 0.0) {
            return Err(Error::config("noise_sigma_frac", "must be >= 0"));
        }
        if !(self.motion_load_gain >= 0.0) {
            return Err(Error::config("motion_load_gain", "must be >= 0"));
        }
        Ok(())
    }

    pub fn nominal_current(&self) -> f64 {
        self.nominal_load_nm / (self.k_torque * self.flux)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultParams {
    pub jam_onset_s: f64,
    /// Jam load step, fraction of nominal load.
    pub jam_step_frac: f64,
    /// Wear load reached at the end of the run, fraction of nominal load.
    pub wear_ramp_frac: f64,
    /// Short-circuit ripple amplitude, fraction of nominal current.
    pub sc_ripple_amp_frac: f64,
    pub sc_ripple_freq_hz: f64,
    pub sc_onset_s: f64,
}

impl Default for FaultParams {
    fn default() -> Self {
        Self {
            jam_onset_s: 3.0,
            jam_step_frac: 0.5,
            wear_ramp_frac: 0.5,
            sc_ripple_amp_frac: 0.5,
            sc_ripple_freq_hz: 60.0,
            sc_onset_s: 3.0,
        }
    }
}

impl FaultParams {
    pub fn validate(&self, duration_s: f64) -> Result<()> {
        for (field, v) in [
            ("jam_step_frac", self.jam_step_frac),
            ("wear_ramp_frac", self.wear_ramp_frac),
            ("sc_ripple_amp_frac", self.sc_ripple_amp_frac),
            ("sc_ripple_freq_hz", self.sc_ripple_freq_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be >= 0")));
            }
        }
        for (field, v) in [("jam_onset_s", self.jam_onset_s), ("sc_onset_s", self.sc_onset_s)] {
            if !(v > 0.0 && v < duration_s) {
                return Err(Error::config(field, format!("{v} not in (0, {duration_s})")));
            }
        }
        Ok(())
    }
}

/// Everything needed to generate banks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub profile: ProfileConfig,
    pub rod: RodParams,
    pub fault: FaultParams,
    /// 1-based position of the faulty rod in faulty banks.
    pub faulty_rod: usize,
    /// Uniform per-rod jitter of the nominal load, as a fraction.
    pub rod_load_jitter: f64,
    /// Uniform per-batch jitter of both demand amplitudes, as a fraction.
    pub batch_demand_jitter: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            profile: ProfileConfig::default(),
            rod: RodParams::default(),
            fault: FaultParams::default(),
            faulty_rod: RODS_PER_BANK,
            rod_load_jitter: 0.02,
            batch_demand_jitter: 0.05,
        }
    }
}

impl GenConfig {
    pub fn with_sample_rate(mut self, hz: f64) -> Self {
        self.profile.sample_rate_hz = hz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.rod.validate()?;
        self.fault.validate(self.profile.duration_s)?;
        if !(1..=RODS_PER_BANK).contains(&self.faulty_rod) {
            return Err(Error::config("faulty_rod", format!("{} not in 1..=10", self.faulty_rod)));
        }
        for (field, v) in [
            ("rod_load_jitter", self.rod_load_jitter),
            ("batch_demand_jitter", self.batch_demand_jitter),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Current and torque of one rod over the observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct RodSignal {
    pub current: Vec<f64>,
    pub torque: Vec<f64>,
}

/// One sample: a `(T x 10)` matrix of one property for a bank of rods.
#[derive(Clone, Debug, PartialEq)]
pub struct Bank {
    pub property: Property,
    /// Row-major, time major: `data[t * 10 + rod]`.
    pub data: Vec<f64>,
    pub label: FaultClass,
    /// 1-based; `None` exactly when `label` is healthy.
    pub faulty_rod_index: Option<usize>,
    pub batch_id: u32,
}

impl Bank {
    pub fn samples(&self) -> usize {
        self.data.len() / RODS_PER_BANK
    }

    /// Column `rod` (0-based).
    pub fn column(&self, rod: usize) -> Vec<f64> {
        self.data.iter().skip(rod).step_by(RODS_PER_BANK).copied().collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_matrix(self.samples(), RODS_PER_BANK, self.data.clone())
            .expect("bank data is T x 10")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub file: String,
    pub batch_id: u32,
    pub label: FaultClass,
    pub faulty_rod_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub property: Property,
    pub n_batches: usize,
    pub samples: usize,
    pub master_seed: u64,
    pub config: GenConfig,
    pub banks: Vec<BankEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub banks: Vec<Bank>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn property(&self) -> Property {
        self.manifest.property
    }

    pub fn samples(&self) -> usize {
        self.manifest.samples
    }

    pub fn count(&self, class: FaultClass) -> usize {
        self.banks.iter().filter(|b| b.label == class).count()
    }
}

fn step_response(cfg: &ProfileConfig, tau: f64) -> (f64, f64) {
    // Unit step response of w^2 / (s^2 + 2 z w s + w^2) and its derivative.
    if tau < 0.0 {
        return (0.0, 0.0);
    }
    let (w, z) = (cfg.natural_freq_rad_s, cfg.damping_ratio);
    let root = (1.0 - z * z).sqrt();
    let wd = w * root;
    let decay = (-z * w * tau).exp();
    let (s, c) = (wd * tau).sin_cos();
    let pos = 1.0 - decay * (c + z / root * s);
    let vel = decay * (w / root) * s;
    (pos, vel)
}

fn position_and_speed(cfg: &ProfileConfig, t: f64) -> (f64, f64) {
    let (p1, v1) = step_response(cfg, t - cfg.demand1_time_s);
    let (p2, v2) = step_response(cfg, t - cfg.demand2_time_s);
    let a1 = cfg.demand1_pos_cm;
    let a2 = cfg.demand2_pos_cm - cfg.demand1_pos_cm;
    (a1 * p1 + a2 * p2, a1 * v1 + a2 * v2)
}

/// Rod position in cm at every sample.
pub fn position_profile(cfg: &ProfileConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok((0..cfg.samples())
        .map(|i| position_and_speed(cfg, cfg.time(i)).0)
        .collect())
}

fn add_noise(series: &mut [f64], frac: f64, seed: u64) {
    if frac == 0.0 {
        return;
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let sigma = frac * (hi - lo);
    let mut rng = seed::rng(seed);
    for v in series.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

/// Simulates one rod. Deterministic given `rng_seed`.
pub fn simulate_rod(
    cfg: &ProfileConfig,
    rp: &RodParams,
    fp: &FaultParams,
    fault: FaultClass,
    rng_seed: u64,
) -> Result<RodSignal> {
    cfg.validate()?;
    rp.validate()?;
    fp.validate(cfg.duration_s)?;
    let n = cfg.samples();
    let kphi = rp.k_torque * rp.flux;
    let l0 = rp.nominal_load_nm;
    let mut current = Vec::with_capacity(n);
    for i in 0..n {
        let t = cfg.time(i);
        let (_, speed) = position_and_speed(cfg, t);
        let mut load = l0 * (1.0 + rp.motion_load_gain * speed.abs());
        match fault {
            FaultClass::Jam if t >= fp.jam_onset_s => load += fp.jam_step_frac * l0,
            FaultClass::Wear => load += fp.wear_ramp_frac * l0 * (t / cfg.duration_s),
            _ => {}
        }
        let mut amps = load / kphi;
        if fault == FaultClass::ShortCircuit && t >= fp.sc_onset_s {
            amps += fp.sc_ripple_amp_frac * rp.nominal_current() * (2.0 * PI * fp.sc_ripple_freq_hz * t).sin();
        }
        current.push(amps);
    }
    let mut torque: Vec<f64> = current.iter().map(|i| rp.k_torque * rp.flux * i).collect();
    add_noise(&mut current, rp.noise_sigma_frac, seed::derive(rng_seed, Stream::Noise, 0));
    add_noise(&mut torque, rp.noise_sigma_frac, seed::derive(rng_seed, Stream::Noise, 1));
    Ok(RodSignal { current, torque })
}

fn simulate_bank_rods(class: FaultClass, cfg: &GenConfig, seed: u64) -> Result<Vec<RodSignal>> {
    cfg.validate()?;
    (0..RODS_PER_BANK)
        .map(|r| {
            let rod_seed = seed::derive(seed, Stream::Rod, r as u64);
            let mut jitter_rng = seed::rng(seed::derive(rod_seed, Stream::Jitter, 0));
            let mut rp = cfg.rod;
            if cfg.rod_load_jitter > 0.0 {
                rp.nominal_load_nm *= 1.0 + jitter_rng.random_range(-cfg.rod_load_jitter..=cfg.rod_load_jitter);
            }
            let fault = if r + 1 == cfg.faulty_rod { class } else { FaultClass::Healthy };
            simulate_rod(&cfg.profile, &rp, &cfg.fault, fault, rod_seed)
        })
        .collect()
}

fn assemble(rods: &[RodSignal], property: Property, class: FaultClass, cfg: &GenConfig, batch_id: u32) -> Bank {
    let n = rods[0].current.len();
    let mut data = vec![0.0; n * RODS_PER_BANK];
    for (r, rod) in rods.iter().enumerate() {
        let series = match property {
            Property::Current => &rod.current,
            Property::Torque => &rod.torque,
        };
        for (t, v) in series.iter().enumerate() {
            data[t * RODS_PER_BANK + r] = *v;
        }
    }
    Bank {
        property,
        data,
        label: class,
        faulty_rod_index: (class != FaultClass::Healthy).then_some(cfg.faulty_rod),
        batch_id,
    }
}

/// Simulates the 10 rods of one bank and returns the requested property.
/// In faulty banks only rod `cfg.faulty_rod` carries the fault.
pub fn generate_bank(property: Property, class: FaultClass, cfg: &GenConfig, seed: u64) -> Result<Bank> {
    let rods = simulate_bank_rods(class, cfg, seed)?;
    Ok(assemble(&rods, property, class, cfg, 0))
}

/// Profile of batch `batch_index` (0-based): demand amplitudes jittered.
fn batch_config(cfg: &GenConfig, master_seed: u64, batch_index: usize) -> (GenConfig, u64) {
    let batch_seed = seed::derive(master_seed, Stream::Batch, batch_index as u64);
    let mut rng = seed::rng(seed::derive(batch_seed, Stream::Profile, 0));
    let mut out = *cfg;
    let j = cfg.batch_demand_jitter;
    if j > 0.0 {
        out.profile.demand1_pos_cm *= 1.0 + rng.random_range(-j..=j);
        out.profile.demand2_pos_cm *= 1.0 + rng.random_range(-j..=j);
    }
    (out, batch_seed)
}

/// `4 * n_batches` banks, one per class per batch, batch-major. Batch ids
/// are 1-based. Banks are generated in parallel; every bank's seed is derived
/// from `(master_seed, batch, class)` so the output does not depend on
/// scheduling.
pub fn generate_dataset(property: Property, n_batches: usize, cfg: &GenConfig, master_seed: u64) -> Result<Dataset> {
    if n_batches == 0 {
        return Err(Error::config("n_batches", "must be >= 1"));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, FaultClass)> = (0..n_batches)
        .flat_map(|b| FaultClass::ALL.into_iter().map(move |c| (b, c)))
        .collect();
    let banks = jobs
        .par_iter()
        .map(|&(b, class)| {
            let (bcfg, batch_seed) = batch_config(cfg, master_seed, b);
            let rods = simulate_bank_rods(class, &bcfg, seed::derive(batch_seed, Stream::Bank, class.label() as u64))?;
            Ok(assemble(&rods, property, class, cfg, b as u32 + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        property,
        n_batches,
        samples: cfg.profile.samples(),
        master_seed,
        config: *cfg,
        banks: banks
            .iter()
            .map(|b| BankEntry {
                file: io::bank_file_name(b),
                batch_id: b.batch_id,
                label: b.label,
                faulty_rod_index: b.faulty_rod_index,
            })
            .collect(),
    };
    Ok(Dataset { banks, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> RodParams {
        RodParams {
            noise_sigma_frac: 0.0,
            ..RodParams::default()
        }
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn profile_shape() {
        let cfg = ProfileConfig::default();
        let p = position_profile(&cfg).unwrap();
        assert_eq!(p.len(), 10_001);
        assert_eq!(p[0], 0.0);
        let at = |s: f64| p[(s * cfg.sample_rate_hz).round() as usize];
        assert!((at(4.9) - 1.735).abs() / 1.735 < 0.01);
        let peak = p[1001..5000].iter().copied().fold(f64::MIN, f64::max);
        assert!(peak > 1.735);
        assert!((p[p.len() - 1] - 3.47).abs() / 3.47 < 0.01);
        // at rest before the first demand
        assert!(p[..=1000].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn profile_rejects_bad_config() {
        let mut cfg = ProfileConfig::default();
        cfg.damping_ratio = 1.0;
        let err = position_profile(&cfg).unwrap_err();
        assert!(err.to_string().contains("damping_ratio"));
        let mut cfg = ProfileConfig::default();
        cfg.demand2_time_s = 0.5;
        assert!(position_profile(&cfg).unwrap_err().to_string().contains("demand2_time_s"));
    }

    #[test]
    fn sample_count() {
        let mut cfg = ProfileConfig::default();
        cfg.sample_rate_hz = 50_000.0;
        assert_eq!(cfg.samples(), 500_001);
    }

    #[test]
    fn torque_equation_holds_without_noise() {
        let rp = RodParams {
            k_torque: 1.7,
            flux: 0.3,
            ..quiet()
        };
        for fault in FaultClass::ALL {
            let s = simulate_rod(&ProfileConfig::default(), &rp, &FaultParams::default(), fault, 3).unwrap();
            assert_eq!(s.current.len(), s.torque.len());
            for (i, t) in s.current.iter().zip(&s.torque) {
                assert_eq!(*t, rp.k_torque * rp.flux * i);
            }
        }
    }

    #[test]
    fn jam_adds_half_newton_metre() {
        let cfg = ProfileConfig::default();
        let s = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::Jam, 0).unwrap();
        let late = mean(&s.torque[3001..10000]);
        let early = mean(&s.torque[1..1000]);
        assert!(((late - early) - 0.5).abs() / 0.5 < 0.05, "{}", late - early);
    }

    fn ls_slope(y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let xm = (n - 1.0) / 2.0;
        let ym = mean(y);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            num += (i as f64 - xm) * (v - ym);
            den += (i as f64 - xm).powi(2);
        }
        num / den
    }

    #[test]
    fn wear_ramps_and_jam_steps() {
        let cfg = ProfileConfig::default();
        let wear = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::Wear, 0).unwrap();
        let healthy = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::Healthy, 0).unwrap();
        let baseline: Vec<f64> = wear.torque.iter().zip(&healthy.torque).map(|(a, b)| a - b).collect();
        assert!(ls_slope(&wear.torque) > 0.0);
        assert!(ls_slope(&baseline) > 0.0);

        let jam = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::Jam, 0).unwrap();
        let mut jumps: Vec<f64> = jam.torque.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let max = jumps.iter().copied().fold(0.0, f64::max);
        jumps.sort_by(f64::total_cmp);
        let median = jumps[jumps.len() / 2];
        assert!(max > 10.0 * median, "max {max} median {median}");
    }

    #[test]
    fn short_circuit_shows_in_current() {
        let cfg = ProfileConfig::default();
        let sc = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::ShortCircuit, 0).unwrap();
        let h = simulate_rod(&cfg, &quiet(), &FaultParams::default(), FaultClass::Healthy, 0).unwrap();
        assert_eq!(sc.current[..3000], h.current[..3000]);
        assert!(rms_diff(&sc.current[3000..], &h.current[3000..]) > 0.3);
    }

    #[test]
    fn noise_is_seeded() {
        let cfg = ProfileConfig::default();
        let a = simulate_rod(&cfg, &RodParams::default(), &FaultParams::default(), FaultClass::Healthy, 1).unwrap();
        let b = simulate_rod(&cfg, &RodParams::default(), &FaultParams::default(), FaultClass::Healthy, 1).unwrap();
        let c = simulate_rod(&cfg, &RodParams::default(), &FaultParams::default(), FaultClass::Healthy, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn healthy_bank_columns_distinct() {
        let bank = generate_bank(Property::Current, FaultClass::Healthy, &GenConfig::default(), 11).unwrap();
        assert_eq!(bank.faulty_rod_index, None);
        let cols: Vec<Vec<f64>> = (0..10).map(|r| bank.column(r)).collect();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(cols[i], cols[j]);
            }
        }
    }

    #[test]
    fn jam_bank_column_ten_stands_out() {
        let bank = generate_bank(Property::Torque, FaultClass::Jam, &GenConfig::default(), 11).unwrap();
        assert_eq!(bank.faulty_rod_index, Some(10));
        let cols: Vec<Vec<f64>> = (0..10).map(|r| bank.column(r)).collect();
        let mut max_healthy = 0.0f64;
        for i in 0..9 {
            for j in i + 1..9 {
                max_healthy = max_healthy.max(rms_diff(&cols[i], &cols[j]));
            }
        }
        let d = rms_diff(&cols[9], &cols[0]);
        assert!(d > 10.0 * max_healthy, "{d} vs {max_healthy}");
    }

    #[test]
    fn bank_is_deterministic() {
        let cfg = GenConfig::default().with_sample_rate(200.0);
        let a = generate_bank(Property::Current, FaultClass::Wear, &cfg, 5).unwrap();
        let b = generate_bank(Property::Current, FaultClass::Wear, &cfg, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_counts() {
        let cfg = GenConfig::default().with_sample_rate(100.0);
        let ds = generate_dataset(Property::Current, 1, &cfg, 3).unwrap();
        assert_eq!(ds.banks.len(), 4);
        for c in FaultClass::ALL {
            assert_eq!(ds.count(c), 1);
        }
        assert!(generate_dataset(Property::Current, 0, &cfg, 3).is_err());
    }

    #[test]
    fn dataset_parallel_matches_serial() {
        let cfg = GenConfig::default().with_sample_rate(100.0);
        let par = generate_dataset(Property::Torque, 3, &cfg, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| generate_dataset(Property::Torque, 3, &cfg, 9).unwrap());
        assert_eq!(par, ser);
    }

    #[test]
    fn batches_differ() {
        let cfg = GenConfig::default().with_sample_rate(100.0);
        let ds = generate_dataset(Property::Current, 2, &cfg, 9).unwrap();
        assert_ne!(ds.banks[0].data, ds.banks[4].data);
    }

    #[test]
    fn faulty_column_deviates_most_from_batch_healthy() {
        let cfg = GenConfig::default().with_sample_rate(200.0);
        for property in [Property::Current, Property::Torque] {
            let ds = generate_dataset(property, 3, &cfg, 21).unwrap();
            for batch in ds.banks.chunks(4) {
                let healthy = &batch[0];
                for bank in &batch[1..] {
                    assert_eq!(bank.faulty_rod_index, Some(10));
                    let dev: Vec<f64> = (0..10).map(|r| rms_diff(&bank.column(r), &healthy.column(r))).collect();
                    assert!(dev[..9].iter().all(|d| *d < dev[9]), "{property} {}: {dev:?}", bank.label);
                }
            }
        }
    }

    #[test]
    fn faulty_rod_hook() {
        let cfg = GenConfig {
            faulty_rod: 3,
            ..GenConfig::default().with_sample_rate(100.0)
        };
        let bank = generate_bank(Property::Current, FaultClass::Jam, &cfg, 0).unwrap();
        assert_eq!(bank.faulty_rod_index, Some(3));
        let bad = GenConfig {
            faulty_rod: 11,
            ..cfg
        };
        assert!(generate_bank(Property::Current, FaultClass::Jam, &bad, 0).is_err());
    }
}
