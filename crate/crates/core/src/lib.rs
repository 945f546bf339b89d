//! Desk-scale simulator for gradient imbalance in multi-task GRPO training.
//!
//! Small analytic policies ([`policy`]) are trained on synthetic task suites
//! ([`tasks`]) with group-relative advantages ([`grpo`]). Per-task gradient
//! norms are tracked with an unbiased split-batch estimator ([`probe`]) and can
//! drive task sampling ([`scheduler`]). [`metrics`] turns the telemetry into
//! learning gains and correlation reports, [`convex`] holds the quadratic test
//! bench, and [`harness`] wires everything into reproducible runs.

pub mod convex;
pub mod error;
pub mod grpo;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod policy;
pub mod probe;
pub mod rng;
pub mod scheduler;
pub mod tasks;

pub use error::{Error, Result};
pub use params::ParamVector;
pub use policy::{Arch, PolicySpec};
