//! Experiment harness behind the CLI: configuration, the `generate`,
//! `train`, `prune`, `report` and `validate` commands, and run manifests.

mod commands;
mod config;
mod manifest;
mod report;

pub use commands::*;
pub use config::{Arm, ExperimentConfig, SamplerKind};
pub use manifest::{hash_file, CommandEntry, FileEntry, RunManifest, MANIFEST_FILE};
pub use report::{cmd_report, load_run, spearman_summary, ReportOutput, RunData, SpearmanSummary};
