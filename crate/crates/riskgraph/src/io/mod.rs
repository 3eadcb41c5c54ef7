//! On-disk formats of the pipeline artifacts.

pub mod artifact;
pub mod csv_log;
pub mod gram;
