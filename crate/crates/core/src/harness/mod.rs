//! Experiment runner: configuration, the training loop, persistence, sweeps,
//! self-checks and export.

pub mod checkpoint;
pub mod config;
pub mod export;
pub mod manifest;
pub mod run;
pub mod sweep;
pub mod trainer;
pub mod validate;

pub use config::{ExperimentConfig, MetricsConfig, ProbeConfig, SamplerConfig};
pub use export::{export, ExportFormat};
pub use manifest::{RunManifest, RunStatus};
pub use run::{read_step_records, resolve_out_dir, run};
pub use sweep::{sweep, SweepGrid, SweepOutcome};
pub use trainer::{StepOutcome, Trainer};
pub use validate::{validate, Suite, ValidationReport};
