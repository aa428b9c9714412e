//! Batch front end for `hdlda-core`: JSON run configuration, CSV ingestion,
//! the `simulate`, `classify`, `regions` and `shrink-compare` commands, and
//! their CSV/JSON reports and run manifest.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod manifest;
pub mod report;

pub use commands::run;
pub use config::{RunConfig, Subcommand};
