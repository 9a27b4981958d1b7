//! Dataset directory layout:
//!
//! - `manifest.json`: schema version, generation config, master seed and the
//!   bank list.
//! - `bank_<batch>_<class>_<property>.f64`: raw little-endian `f64`,
//!   row-major (time major, 10 rod columns), `T * 10` values.

use std::fs;
use std::path::Path;

use super::{Bank, Dataset, DatasetManifest, RODS_PER_BANK};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

pub(super) fn bank_file_name(bank: &Bank) -> String {
    format!("bank_{}_{}_{}.f64", bank.batch_id, bank.label, bank.property)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (bank, entry) in ds.banks.iter().zip(&ds.manifest.banks) {
        let bytes: Vec<u8> = bank.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&entry.file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&ds.manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.samples != manifest.config.profile.samples() {
        return Err(Error::Manifest(format!(
            "samples {} disagrees with profile config ({})",
            manifest.samples,
            manifest.config.profile.samples()
        )));
    }
    let expected = manifest.samples * RODS_PER_BANK;
    let mut banks = Vec::with_capacity(manifest.banks.len());
    for entry in &manifest.banks {
        let file = dir.join(&entry.file);
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        if bytes.len() != expected * 8 {
            return Err(Error::Corrupt {
                file,
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let bank = Bank {
            property: manifest.property,
            data,
            label: entry.label,
            faulty_rod_index: entry.faulty_rod_index,
            batch_id: entry.batch_id,
        };
        if bank_file_name(&bank) != entry.file {
            return Err(Error::Manifest(format!("bank entry {} does not match its fields", entry.file)));
        }
        if (bank.label == super::FaultClass::Healthy) != bank.faulty_rod_index.is_none() {
            return Err(Error::Manifest(format!("{}: label and faulty rod disagree", entry.file)));
        }
        banks.push(bank);
    }
    Ok(Dataset { banks, manifest })
}

/// Writes one bank as CSV (`t_s,rod1..rod10`) for inspection.
pub fn write_bank_csv(bank: &Bank, sample_rate_hz: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut header = vec!["t_s".to_string()];
    header.extend((1..=RODS_PER_BANK).map(|r| format!("rod{r}")));
    w.write_record(&header)?;
    for (t, row) in bank.data.chunks_exact(RODS_PER_BANK).enumerate() {
        let mut rec = vec![(t as f64 / sample_rate_hz).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
