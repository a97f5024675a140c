//! Checksum manifest written next to each generated dataset: the generator
//! config plus sha256/instance counts per file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use gapnet_core::data::GeneratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CmdError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub sha256: String,
    pub instances: usize,
    pub requests: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: GeneratorConfig,
    pub files: BTreeMap<String, FileEntry>,
}

pub fn sha256_hex(path: &Path) -> Result<String, CmdError> {
    let mut file = fs::File::open(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CmdError> {
    let json = serde_json::to_string_pretty(manifest).map_err(CmdError::data)?;
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, json + "\n").map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CmdError> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}
