//! Section-transition analysis of LMS event logs.
//!
//! Pipeline: [`ingest`] parses and cleans the log, [`matrix`] counts
//! transitions between sections, [`metrics`] reduces a matrix to six
//! numbers, [`classify`] maps those to a navigation pattern, [`render`]
//! draws heatmaps and [`report`] summarizes a corpus. [`synth`] generates
//! logs with a known pattern.

pub mod classify;
pub mod cli;
pub mod config;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod render;
pub mod report;
pub mod synth;
