// SPDX-License-Identifier: MIT OR Apache-2.0

//! The five experiment runners.

mod flip;
mod perplexity;
mod rank;
mod risk;
mod scan;

use std::collections::BTreeMap;

use serde_json::Value;

pub use flip::run_flip;
pub use perplexity::run_perplexity_check;
pub use rank::run_rank;
pub use risk::{load_notes, run_risk};
pub use scan::run_scan;

use crate::config::ExperimentKind;
use crate::context::Context;
use crate::error::Result;
use crate::report::{Provenance, ReportBundle, RewriteGrid, RunOutput, Table, REPORT_SCHEMA_VERSION};

/// Run whatever `ctx.config.kind` names.
pub fn run(ctx: &Context) -> Result<RunOutput> {
    match ctx.config.kind {
        ExperimentKind::Scan => run_scan(ctx),
        ExperimentKind::Flip => run_flip(ctx),
        ExperimentKind::PerplexityCheck => run_perplexity_check(ctx),
        ExperimentKind::Risk => run_risk(ctx),
        ExperimentKind::Rank => run_rank(ctx),
    }
}

#[derive(Default)]
pub(crate) struct Parts {
    pub summary: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub grids: BTreeMap<String, RewriteGrid>,
    pub notes: Vec<String>,
}

pub(crate) fn bundle(ctx: &Context, parts: Parts) -> ReportBundle {
    let mut config = serde_json::to_value(&ctx.config).expect("config serializes");
    if let Value::Object(map) = &mut config {
        map.remove("output_dir");
    }
    ReportBundle {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: ctx.config.kind,
        config,
        provenance: Provenance {
            engine_version: patchlab_core::ENGINE_VERSION.to_string(),
            harness_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: ctx.config.seed,
            model_digest: ctx.model.digest().to_string(),
            judge_digest: ctx.judge.as_ref().map(|(m, _)| m.digest().to_string()),
        },
        summary: parts.summary,
        tables: parts.tables,
        grids: parts.grids,
        notes: parts.notes,
    }
}

pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; zero for a single value.
pub(crate) fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

pub(crate) fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, crate::report::num)
}
