//! File formats, configuration and orchestration for `riskgraph-core`.
//!
//! The pipeline stages of [`stages`] read and write the artifacts described
//! in [`io`]; [`pipeline::run_pipeline`] chains them under one
//! [`config::PipelineConfig`], and [`cli`] exposes every stage as a
//! subcommand of the `riskgraph` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod io;
pub mod pipeline;
pub mod stages;

pub use config::{LoadedConfig, PipelineConfig};
pub use error::{Result, RunError};
pub use pipeline::{run_pipeline, RunReport};
