//! Library surface of the pipeline orchestrator, used by the binary and the
//! acceptance suite.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::PipelineConfig;
pub use manifest::RunManifest;
