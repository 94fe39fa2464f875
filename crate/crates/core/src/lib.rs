//! Video instruction-data synthesis.
//!
//! Stages, in pipeline order:
//!
//! - [`media`]: manifests and frame extraction through an external decoder
//! - [`scene`]: content-cut detection and the dynamic-video filter chain
//! - [`caption`]: three-level recurrent descriptions
//! - [`qa`]: typed question generation, parsing, dedup and blacklist filtering
//! - [`dataset`]: instruction records and corpus statistics
//!
//! plus [`repplan`] for SlowFast visual-token budgeting and [`annotator`] for
//! the remote and mock annotation backends.

pub mod annotator;
pub mod caption;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod jsonl;
pub mod media;
pub mod pipeline;
pub mod qa;
pub mod repplan;
pub mod scene;
pub mod synthetic;

pub use error::{Error, Result};
