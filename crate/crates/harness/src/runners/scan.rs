// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use patchlab_core::{forward, softmax, HookSite};
use patchlab_metrics::rewrite_score;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{bundle, Parts};
use crate::context::{condition_prompt, select, variant_ids, Context};
use crate::error::Result;
use crate::report::{num, RewriteGrid, RunOutput, Table};

struct PromptScan {
    condition: String,
    template: usize,
    grid: RewriteGrid,
    anchor: usize,
    p_before: f64,
    errors: Vec<(usize, usize, String)>,
}

/// Rewrite-score scan over every (layer, prompt token) with a single-layer
/// patch, read at a teacher-forced slot after the prompt.
pub fn run_scan(ctx: &Context) -> Result<RunOutput> {
    let cfg = &ctx.config;
    let scan = &cfg.scan;
    let patch = &cfg.patch;
    let tok = &ctx.tokenizer;
    let n_layers = ctx.n_layers();
    let source = ctx.source(&patch.source_prompt, patch.source_chat, &patch.source_token, patch.site)?;
    let variants = variant_ids(tok, &scan.variants)?;
    let forced = tok.tokenize(&scan.readout_prefix).map_err(patchlab_core::EngineError::from)?;
    let read = |logits: &[f32]| -> f64 {
        let p = softmax(logits);
        variants.iter().map(|&v| p[v as usize]).sum()
    };

    let mut scans = Vec::new();
    for (ti, template) in scan.templates.iter().enumerate() {
        for condition in &scan.conditions {
            let prompt = ctx.render(&condition_prompt(template, condition))?;
            let anchor = select(&prompt, &patch.target_token, Some(condition), "patch.target_token")?;
            let n_prompt = prompt.tokens.len();
            let mut ids = prompt.tokens.clone();
            ids.extend_from_slice(&forced);
            let none = BTreeSet::<HookSite>::new();
            let base = forward(&ctx.model, &ids, &none, &[])?;
            let p_before = read(base.logits.last().expect("non-empty"));
            let cells: Vec<(usize, usize)> = (0..n_layers).flat_map(|l| (0..n_prompt).map(move |t| (l, t))).collect();
            let scored: Vec<Result<std::result::Result<f64, String>>> = cells
                .par_iter()
                .map(|&(l, t)| {
                    let spec = source.spec(patch.site, l, 0, patch.scale, t);
                    let patches = source.patches(&spec, n_layers)?;
                    let res = forward(&ctx.model, &ids, &none, &patches)?;
                    let p_after = read(res.logits.last().expect("non-empty"));
                    Ok(rewrite_score(p_before, p_after).map_err(|e| e.to_string()))
                })
                .collect();
            let labels = prompt
                .tokens
                .iter()
                .map(|&id| tok.id_to_token(id).unwrap_or("").to_string())
                .collect();
            let mut grid = RewriteGrid::new(n_layers, labels, Some(anchor));
            let mut errors = Vec::new();
            for (&(l, t), r) in cells.iter().zip(scored) {
                match r? {
                    Ok(s) => grid.values[l][t] = Some(s),
                    Err(e) => errors.push((l, t, e)),
                }
            }
            scans.push(PromptScan {
                condition: condition.clone(),
                template: ti,
                grid,
                anchor,
                p_before,
                errors,
            });
        }
    }

    let avg = average(&scans, n_layers);
    let mut parts = Parts::default();
    let mut per_prompt = Table::new(&[
        "prompt_id",
        "template",
        "condition",
        "n_tokens",
        "anchor",
        "p_before",
        "argmax_layer",
        "argmax_token",
        "argmax_score",
        "missing",
    ]);
    let mut errors = Table::new(&["prompt_id", "layer", "token_index", "error"]);
    for (k, s) in scans.iter().enumerate() {
        let id = format!("scan/{k:02}");
        let best = s.grid.argmax();
        per_prompt.push(vec![
            id.clone().into(),
            s.template.into(),
            s.condition.clone().into(),
            s.grid.n_tokens.into(),
            s.anchor.into(),
            num(s.p_before),
            best.map_or(Value::Null, |b| b.0.into()),
            best.map_or(Value::Null, |b| b.1.into()),
            best.map_or(Value::Null, |b| num(b.2)),
            s.grid.missing().into(),
        ]);
        for (l, t, e) in &s.errors {
            errors.push(vec![id.clone().into(), (*l).into(), (*t).into(), e.clone().into()]);
        }
        parts.grids.insert(format!("grid_{k:02}"), s.grid.clone());
    }
    let best = avg.argmax();
    parts.summary.insert(
        "grid_argmax".into(),
        best.map_or(Value::Null, |(l, t, v)| json!({"layer": l, "token_index": t, "score": num(v)})),
    );
    parts.summary.insert("anchor".into(), avg.anchor.into());
    parts.summary.insert("readout_variant_ids".into(), json!(variants));
    parts.summary.insert("readout_prefix".into(), scan.readout_prefix.clone().into());
    parts.summary.insert("prompts".into(), scans.len().into());
    parts.summary.insert("missing_cells".into(), scans.iter().map(|s| s.grid.missing()).sum::<usize>().into());
    parts.tables.insert("scan_prompts".into(), per_prompt);
    parts.tables.insert("scan_errors".into(), errors);
    parts.grids.insert("grid".into(), avg);
    parts.notes.push(
        "readout probability sums the single-token variants listed in readout_variant_ids; columns of the averaged grid are aligned on the condition's last subtoken".into(),
    );
    Ok(RunOutput {
        bundle: bundle(ctx, parts),
        records: Vec::new(),
    })
}

/// Mean over prompts after aligning every prompt's anchor column.
fn average(scans: &[PromptScan], n_layers: usize) -> RewriteGrid {
    let a = scans.iter().map(|s| s.anchor).max().unwrap_or(0);
    let tail = scans.iter().map(|s| s.grid.n_tokens - s.anchor).max().unwrap_or(0);
    let width = a + tail;
    let mut labels = vec![String::new(); width];
    let mut sums = vec![vec![(0.0, 0usize); width]; n_layers];
    for s in scans {
        let shift = a - s.anchor;
        for (t, label) in s.grid.tokens.iter().enumerate() {
            if labels[t + shift].is_empty() {
                labels[t + shift] = label.clone();
            }
        }
        for (l, row) in s.grid.values.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    let cell = &mut sums[l][t + shift];
                    cell.0 += v;
                    cell.1 += 1;
                }
            }
        }
    }
    let mut grid = RewriteGrid::new(n_layers, labels, Some(a));
    for (l, row) in sums.iter().enumerate() {
        for (t, &(sum, n)) in row.iter().enumerate() {
            grid.values[l][t] = (n > 0).then(|| sum / n as f64);
        }
    }
    grid
}
