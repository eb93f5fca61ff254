// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment harness: configs, runners, reports, prompts, synthetic notes
//! and a planted toy model.

pub mod config;
pub mod context;
pub mod error;
pub mod notes;
pub mod prompts;
pub mod report;
pub mod runners;
pub mod toy;

pub use config::{ExperimentConfig, ExperimentKind, TokenRule};
pub use context::Context;
pub use error::{HarnessError, Result};
pub use report::{emit, ReportBundle, RewriteGrid, RunOutput, Table};
pub use runners::run;
