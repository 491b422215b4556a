//! The experiment grid: splits, per-seed training, attribution,
//! faithfulness, select-then-predict models, agreement and report tables,
//! with a resumable run manifest.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod tables;

pub use config::ExperimentConfig;
pub use manifest::{RunManifest, Stage, StageStatus};
pub use pipeline::{run_pipeline, run_until, Pipeline};
pub use report::{emit_report, token_frequency_report};
