//! Configuration-driven orchestration of the bagged membership-inference
//! pipeline: allocate reference and target plans, train both model sets,
//! extract confidences, fit per-point and per-class attacks, evaluate them
//! against the targets, and compare the vulnerable-point sets.
//!
//! Artifacts land under one output directory:
//!
//! ```text
//! plans/     <name>.bin, target.bin
//! models/    <name>/, target/
//! tensors/   <name>.bin, target.bin
//! attacks/   gmia-<name>.jsonl, class-based.jsonl
//! reports/   gmia-<name>.*, class-based.*, random-guess.*, comparison.json
//! manifest.json
//! ```

pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use compare::{compare_attacks, Comparison};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{Pipeline, Stage};
