//! Experiment driver for blowup-core: configuration, pipelines, manifests
//! and sweeps.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod run;
pub mod sweep;

pub use config::{Experiment, ExperimentConfig};
pub use error::{LabError, Result};
pub use manifest::RunManifest;
pub use run::run;
pub use sweep::sweep;
