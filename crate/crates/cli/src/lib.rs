//! Command-line pipeline for qdiff: configuration, staged execution with
//! caching, and the output manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::CliError;
pub use manifest::{write_manifest, ManifestEntry, MANIFEST_FILE};
pub use pipeline::{Pipeline, Stage, StageReport};
