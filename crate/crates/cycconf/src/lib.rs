//! Files, datasets, training runs and the command line around `cycconf-core`.
//!
//! The crate renders the synthetic moving-shapes benchmark to PNG and JSON,
//! loads it back as a validated [`datapipe::DatasetIndex`], drives training
//! runs that write a loss trace and a checkpoint, evaluates checkpoints in and
//! out of domain, and exports matching diagnostics.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datapipe;
pub mod error;
pub mod evalkit;
pub mod fsutil;
pub mod imageio;
pub mod inspect;
pub mod runner;
pub mod schema;
pub mod synthvid;

pub use cycconf_core as core;
pub use error::{Error, Result};
