//! Line-delimited JSON records: datasets, predictions, training history.
//!
//! One record per line, schema enforced by the serde derives (unknown keys
//! rejected, missing fields named). Read errors carry the 1-based line
//! number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gapnet_core::data::Instance;
use gapnet_core::trainer::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::error::CmdError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRow {
    pub request_id: u64,
    pub score: f64,
    pub label: u8,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CmdError> {
    let file = File::open(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CmdError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|e| CmdError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CmdError> {
    let file = File::create(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record).map_err(CmdError::data)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>, CmdError> {
    read_lines(path)
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<(), CmdError> {
    write_lines(path, instances)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, CmdError> {
    read_lines(path)
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), CmdError> {
    write_lines(path, rows)
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>, CmdError> {
    read_lines(path)
}

pub fn write_history(path: &Path, records: &[EpochRecord]) -> Result<(), CmdError> {
    write_lines(path, records)
}
