//! File formats, the experiment runner and the command-line front end for
//! `memaudit-core`.
//!
//! * [`csvio`]: CSV datasets in, attack records and PCA points out.
//! * [`modelio`]: versioned JSON model files.
//! * [`config`]: the TOML experiment description and its validation.
//! * [`runner`]: runs every scenario point × seed and writes the artifacts.
//! * [`render`]: re-renders tables and summaries from stored records.

pub mod config;
pub mod csvio;
pub mod error;
pub mod modelio;
pub mod render;
pub mod runner;

pub use error::{Error, Result};
