// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use patchlab_core::{batch_generate, BatchItem};
use patchlab_metrics::{classify_demographic, flip_ratio, Classification};
use serde_json::Value;

use super::{bundle, mean, opt, Parts};
use crate::context::{condition_prompt, select, Context};
use crate::error::Result;
use crate::report::{num, RunOutput, Table};

/// Arm name of the unpatched baseline.
pub const BEFORE: &str = "before";

pub fn arm_name(scale: f64, window_radius: usize) -> String {
    format!("c={scale},w={window_radius}")
}

/// Demographic flip ratios before and after patching, per condition and
/// per (scale, window) cell.
pub fn run_flip(ctx: &Context) -> Result<RunOutput> {
    let cfg = &ctx.config;
    let flip = &cfg.flip;
    let patch = &cfg.patch;
    let n_layers = ctx.n_layers();
    let source = ctx.source(&patch.source_prompt, patch.source_chat, &patch.source_token, patch.site)?;

    let mut items = Vec::new();
    let mut meta = Vec::new();
    for condition in &flip.conditions {
        let prompt = ctx.render(&condition_prompt(&flip.template, condition))?;
        let target = select(&prompt, &patch.target_token, Some(condition), "patch.target_token")?;
        items.push(BatchItem {
            prompt_id: format!("{condition}|{BEFORE}"),
            prompt: prompt.clone(),
            patches: Vec::new(),
            interventions: Vec::new(),
        });
        meta.push((condition.clone(), BEFORE.to_string(), None));
        for cell in &flip.cells {
            let spec = source.spec(patch.site, patch.layer, cell.window_radius, cell.scale, target);
            let arm = arm_name(cell.scale, cell.window_radius);
            items.push(BatchItem {
                prompt_id: format!("{condition}|{arm}"),
                prompt: prompt.clone(),
                patches: source.patches(&spec, n_layers)?,
                interventions: vec![spec],
            });
            meta.push((condition.clone(), arm, Some(*cell)));
        }
    }
    let mut records = batch_generate(&ctx.model, &ctx.tokenizer, &items, flip.samples, &ctx.sampler)?;
    let labels: Vec<Classification> = records
        .iter()
        .map(|r| classify_demographic(&r.completion_text, &ctx.lexicon, flip.mode))
        .collect();
    for (r, c) in records.iter_mut().zip(&labels) {
        r.label = Some(c.as_str().to_string());
    }

    let mut table = Table::new(&[
        "condition",
        "arm",
        "layer",
        "scale",
        "window_radius",
        "target",
        "ratio",
        "target_count",
        "stated",
        "excluded",
        "n",
    ]);
    let mut by_arm: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, (condition, arm, cell)) in meta.iter().enumerate() {
        let slice = &labels[i * flip.samples..(i + 1) * flip.samples];
        let ratio = flip_ratio(slice, &flip.target_label);
        let (r, count, stated, excluded) = match &ratio {
            Ok(f) => (Some(f.ratio), f.target_count, f.stated, f.excluded),
            Err(_) => (None, 0, 0, slice.len()),
        };
        if let Some(r) = r {
            by_arm.entry(arm.clone()).or_default().push(r);
        }
        table.push(vec![
            condition.clone().into(),
            arm.clone().into(),
            cell.map_or(Value::Null, |_| patch.layer.into()),
            cell.map_or(Value::Null, |c| num(c.scale)),
            cell.map_or(Value::Null, |c| c.window_radius.into()),
            flip.target_label.clone().into(),
            opt(r),
            count.into(),
            stated.into(),
            excluded.into(),
            slice.len().into(),
        ]);
    }
    let mut parts = Parts::default();
    let summary: serde_json::Map<String, Value> = by_arm.iter().map(|(k, v)| (k.clone(), opt(mean(v)))).collect();
    parts.summary.insert("mean_ratio_by_arm".into(), Value::Object(summary));
    parts.summary.insert("target".into(), flip.target_label.clone().into());
    parts.summary.insert("records".into(), records.len().into());
    parts.tables.insert("flip".into(), table);
    Ok(RunOutput {
        bundle: bundle(ctx, parts),
        records,
    })
}
