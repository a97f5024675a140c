//! Metric report output: one machine-readable JSON line plus a small human
//! table. No timestamps anywhere — outputs must be byte-stable across runs.

use std::fs;
use std::path::Path;

use gapnet_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::error::CmdError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub dataset: String,
    pub k: Option<usize>,
    pub auc: f64,
    pub ndcg: f64,
    pub map: f64,
    pub groups_scored: usize,
    pub groups_skipped: usize,
    pub instances: usize,
}

impl ReportRecord {
    pub fn new(dataset: &str, k: Option<usize>, report: &MetricsReport) -> Self {
        ReportRecord {
            dataset: dataset.to_string(),
            k,
            auc: report.auc,
            ndcg: report.ndcg,
            map: report.map,
            groups_scored: report.groups_scored,
            groups_skipped: report.groups_skipped,
            instances: report.instances,
        }
    }

    pub fn render_text(&self) -> String {
        let k = self.k.map(|k| k.to_string()).unwrap_or_else(|| "full".into());
        format!(
            "dataset: {}\ninstances: {} ({} groups scored, {} skipped)\nAUC   {:.6}\nNDCG@{k} {:.6}\nMAP   {:.6}",
            self.dataset,
            self.instances,
            self.groups_scored,
            self.groups_skipped,
            self.auc,
            self.ndcg,
            self.map,
        )
    }
}

pub fn write_report(path: &Path, record: &ReportRecord) -> Result<(), CmdError> {
    let json = serde_json::to_string(record).map_err(CmdError::data)?;
    fs::write(path, json + "\n").map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

pub fn read_report(path: &Path) -> Result<ReportRecord, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(text.trim())
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_and_renders() {
        let report = MetricsReport {
            auc: 0.75,
            ndcg: 0.6,
            map: 0.5,
            groups_scored: 10,
            groups_skipped: 2,
            instances: 50,
        };
        let record = ReportRecord::new("test.jsonl", None, &report);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report(&path, &record).unwrap();
        let loaded = read_report(&path).unwrap();
        assert_eq!(loaded.auc, record.auc);
        assert!(record.render_text().contains("AUC   0.750000"));
    }
}
