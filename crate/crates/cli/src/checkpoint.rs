//! Versioned JSON checkpoints: model config + ablation + every parameter
//! tensor keyed by path. Round trips are bit-exact (shortest-round-trip
//! float formatting on write, exact parsing on read).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gapnet_core::model::{AblationConfig, GapNetParams, ModelConfig};
use gapnet_core::rng::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::CmdError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub ablation: AblationConfig,
    pub params: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn from_params(params: &GapNetParams, ablation: &AblationConfig) -> Self {
        let mut map = BTreeMap::new();
        params.visit(&mut |path, p| {
            map.insert(path, TensorRecord { shape: p.shape.clone(), data: p.data.clone() });
        });
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: params.config.clone(),
            ablation: *ablation,
            params: map,
        }
    }

    /// Rebuild the parameter containers and overwrite every tensor from the
    /// stored records. Fails if paths or shapes disagree with the configs.
    pub fn into_params(self) -> Result<(GapNetParams, AblationConfig), CmdError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CmdError::Data(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut params = GapNetParams::new(&self.model, &self.ablation, &mut SplitMix64::new(0))
            .map_err(CmdError::data)?;
        let mut missing = Vec::new();
        let stored = self.params;
        let mut seen = 0usize;
        let mut err = None;
        params.visit_mut(&mut |path, p| {
            match stored.get(&path) {
                Some(rec) if rec.shape == p.shape => {
                    p.data = rec.data.clone();
                    seen += 1;
                }
                Some(rec) => {
                    err = Some(format!(
                        "checkpoint tensor `{path}` has shape {:?}, expected {:?}",
                        rec.shape, p.shape
                    ));
                }
                None => missing.push(path),
            }
        });
        if let Some(msg) = err {
            return Err(CmdError::Data(msg));
        }
        if !missing.is_empty() {
            return Err(CmdError::Data(format!("checkpoint is missing tensors: {missing:?}")));
        }
        if seen != stored.len() {
            return Err(CmdError::Data(format!(
                "checkpoint carries {} tensors, model expects {seen}",
                stored.len()
            )));
        }
        Ok((params, self.ablation))
    }
}

pub fn save(path: &Path, params: &GapNetParams, ablation: &AblationConfig) -> Result<(), CmdError> {
    let checkpoint = Checkpoint::from_params(params, ablation);
    let json = serde_json::to_string(&checkpoint).map_err(CmdError::data)?;
    fs::write(path, json + "\n").map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<(GapNetParams, AblationConfig), CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    checkpoint.into_params()
}
