//! Batch front-end: JSON run configs in, CSV and JSON artifacts out.

pub mod commands;
pub mod config;
pub mod output;
