//! Ablation harness: (dataset x variant x seed) cells, run independently
//! (in parallel) and aggregated into a mean +/- std table per variant.
//! A failing cell is recorded and the run continues.

use std::path::Path;
use std::sync::Arc;

use gapnet_core::data::Instance;
use gapnet_core::trainer::{self, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{model_for_generator, ExperimentConfig};
use crate::error::CmdError;
use crate::jsonl;
use crate::manifest;
use crate::variants::parse_preset;

/// One dataset directory: the three split files plus its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub gen_config: gapnet_core::data::GeneratorConfig,
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
}

pub fn load_dataset_dir(dir: &Path) -> Result<Dataset, CmdError> {
    let manifest = manifest::read_manifest(dir)?;
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Dataset {
        name,
        gen_config: manifest.config,
        train: jsonl::read_instances(&dir.join("train.jsonl"))?,
        val: jsonl::read_instances(&dir.join("val.jsonl"))?,
        test: jsonl::read_instances(&dir.join("test.jsonl"))?,
    })
}

/// Machine-readable record for one (dataset, variant, seed) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_val_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_cell(
    dataset: &Dataset,
    variant: &str,
    seed: u64,
    base: &ExperimentConfig,
    k: Option<usize>,
) -> Result<CellRecord, CmdError> {
    let ablation = parse_preset(variant)?;
    let model_cfg = model_for_generator(&base.model, &dataset.gen_config);
    let train_cfg = TrainConfig { seed, ..base.train.clone() };
    let result = trainer::train(&model_cfg, &ablation, &dataset.train, &dataset.val, &train_cfg)
        .map_err(CmdError::data)?;
    let report = trainer::evaluate_model(&result.params, &ablation, &dataset.test, k)
        .map_err(CmdError::data)?;
    Ok(CellRecord {
        dataset: dataset.name.clone(),
        variant: variant.to_string(),
        seed,
        status: "ok".into(),
        auc: Some(report.auc),
        ndcg: Some(report.ndcg),
        map: Some(report.map),
        best_val_auc: Some(result.best_val_auc),
        error: None,
    })
}

/// Run every (dataset, variant, seed) cell. Cells are independent; failures
/// become error records instead of aborting the sweep. Results come back in
/// deterministic (dataset, variant, seed) order.
pub fn run_cells(
    datasets: &[Arc<Dataset>],
    variants: &[String],
    seeds: &[u64],
    base: &ExperimentConfig,
    k: Option<usize>,
) -> Vec<CellRecord> {
    let mut cells = Vec::new();
    for dataset in datasets {
        for (vi, variant) in variants.iter().enumerate() {
            for &seed in seeds {
                cells.push((dataset.clone(), vi, variant.clone(), seed));
            }
        }
    }
    let mut results: Vec<((String, usize, u64), CellRecord)> = cells
        .par_iter()
        .map(|(dataset, vi, variant, seed)| {
            let record = run_cell(dataset, variant, *seed, base, k).unwrap_or_else(|err| CellRecord {
                dataset: dataset.name.clone(),
                variant: variant.clone(),
                seed: *seed,
                status: "error".into(),
                auc: None,
                ndcg: None,
                map: None,
                best_val_auc: None,
                error: Some(err.to_string()),
            });
            ((dataset.name.clone(), *vi, *seed), record)
        })
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    results.into_iter().map(|(_, r)| r).collect()
}

/// Mean +/- sample std over ok seeds for one (dataset, variant).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub variant: String,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub ndcg_mean: f64,
    pub ndcg_std: f64,
    pub map_mean: f64,
    pub map_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(records: &[CellRecord], variants: &[String]) -> Vec<TableRow> {
    let mut datasets: Vec<String> = records.iter().map(|r| r.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();

    let mut rows = Vec::new();
    for dataset in &datasets {
        for variant in variants {
            let cells: Vec<&CellRecord> = records
                .iter()
                .filter(|r| &r.dataset == dataset && &r.variant == variant)
                .collect();
            if cells.is_empty() {
                continue;
            }
            let ok: Vec<&CellRecord> = cells.iter().filter(|r| r.status == "ok").cloned().collect();
            let collect = |f: fn(&CellRecord) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            let (auc_mean, auc_std) = mean_std(&collect(|r| r.auc));
            let (ndcg_mean, ndcg_std) = mean_std(&collect(|r| r.ndcg));
            let (map_mean, map_std) = mean_std(&collect(|r| r.map));
            rows.push(TableRow {
                dataset: dataset.clone(),
                variant: variant.clone(),
                runs_ok: ok.len(),
                runs_failed: cells.len() - ok.len(),
                auc_mean,
                auc_std,
                ndcg_mean,
                ndcg_std,
                map_mean,
                map_std,
            });
        }
    }
    rows
}

pub fn render_table(rows: &[TableRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<16} {:>4} {:>20} {:>20} {:>20}\n",
        "dataset", "variant", "runs", "AUC", "NDCG", "MAP"
    ));
    for row in rows {
        let cell = |mean: f64, std: f64| {
            if mean.is_nan() {
                "failed".to_string()
            } else {
                format!("{mean:.4} ± {std:.4}")
            }
        };
        out.push_str(&format!(
            "{:<14} {:<16} {:>4} {:>20} {:>20} {:>20}\n",
            row.dataset,
            row.variant,
            row.runs_ok,
            cell(row.auc_mean, row.auc_std),
            cell(row.ndcg_mean, row.ndcg_std),
            cell(row.map_mean, row.map_std),
        ));
    }
    out
}
