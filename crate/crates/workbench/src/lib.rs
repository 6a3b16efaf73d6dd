//! Configuration, staged pipelines and run manifests for the `ghostflow`
//! command-line tool.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::WorkbenchConfig;
pub use error::{Error, Result};
pub use manifest::RunManifest;
pub use pipeline::{run_stage, Stage};
