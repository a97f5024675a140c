//! IO, file formats, and the experiment harness around `gapnet-core`:
//! line-delimited datasets and predictions, JSON checkpoints and configs,
//! metric reports, and the ablation runner.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod manifest;
pub mod report;
pub mod variants;

pub use error::CmdError;
