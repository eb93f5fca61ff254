// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use patchlab_core::generate::score_tokens;
use patchlab_core::{batch_generate, distortion_baseline, BatchItem, DistortionParams};
use patchlab_metrics::perplexity;
use serde_json::Value;

use super::{bundle, mean, opt, std_dev, Parts};
use crate::config::DistortionSection;
use crate::context::{condition_prompt, select, Context};
use crate::error::{HarnessError, Result};
use crate::report::{num, RunOutput, Table};

pub const DISTORTION: &str = "distortion";

/// Judge-model perplexity of completions before patching, after patching
/// at each scale, and under the random-token distortion baseline.
pub fn run_perplexity_check(ctx: &Context) -> Result<RunOutput> {
    let cfg = &ctx.config;
    let pc = &cfg.perplexity;
    let patch = &cfg.patch;
    let n_layers = ctx.n_layers();
    let (judge, judge_tok) = ctx
        .judge
        .as_ref()
        .ok_or_else(|| HarnessError::config("model.judge", "perplexity_check needs a judge model"))?;
    let context = judge_tok.tokenize(&pc.judge_prefix).map_err(patchlab_core::EngineError::from)?;
    if context.is_empty() {
        return Err(HarnessError::config("perplexity.judge_prefix", "must encode to at least one token"));
    }
    let source = ctx.source(&patch.source_prompt, patch.source_chat, &patch.source_token, patch.site)?;

    let mut items = Vec::new();
    let mut arms = Vec::new();
    for (ci, condition) in pc.conditions.iter().enumerate() {
        let prompt = ctx.render(&condition_prompt(&pc.template, condition))?;
        let target = select(&prompt, &patch.target_token, Some(condition), "patch.target_token")?;
        items.push(BatchItem {
            prompt_id: format!("{condition}|before"),
            prompt: prompt.clone(),
            patches: Vec::new(),
            interventions: Vec::new(),
        });
        arms.push(("before".to_string(), None));
        for &scale in &pc.scales {
            let spec = source.spec(patch.site, patch.layer, patch.window_radius, scale, target);
            let arm = format!("c={scale}");
            items.push(BatchItem {
                prompt_id: format!("{condition}|{arm}"),
                prompt: prompt.clone(),
                patches: source.patches(&spec, n_layers)?,
                interventions: vec![spec],
            });
            arms.push((arm, Some(scale)));
        }
        if let Some(d) = &pc.distortion {
            let params = DistortionParams {
                token_fraction: d.token_fraction,
                layers: distortion_layers(d, n_layers)?,
                scale: d.scale,
                site: patch.site,
                source_token_index: source.index,
                source_layer: Some(d.source_layer.unwrap_or(patch.layer)),
                seed: d.seed.wrapping_add(ci as u64),
            };
            let patches = distortion_baseline(n_layers, prompt.tokens.len(), &source.trace, &params)?;
            items.push(BatchItem {
                prompt_id: format!("{condition}|{DISTORTION}"),
                prompt,
                patches,
                interventions: Vec::new(),
            });
            arms.push((DISTORTION.to_string(), Some(d.scale)));
        }
    }
    let records = batch_generate(&ctx.model, &ctx.tokenizer, &items, pc.samples, &ctx.sampler)?;

    let mut per_record = Table::new(&["prompt_id", "record_index", "judge_tokens", "perplexity"]);
    let mut by_arm: BTreeMap<(usize, String), (Option<f64>, Vec<f64>, usize)> = BTreeMap::new();
    let order: Vec<String> = {
        let mut seen = Vec::new();
        for (a, _) in &arms {
            if !seen.contains(a) {
                seen.push(a.clone());
            }
        }
        seen
    };
    for (k, r) in records.iter().enumerate() {
        let (arm, scale) = &arms[k / pc.samples];
        let rank = order.iter().position(|a| a == arm).expect("arm listed");
        let entry = by_arm.entry((rank, arm.clone())).or_insert((*scale, Vec::new(), 0));
        let tokens = judge_tok.tokenize(&r.completion_text).map_err(patchlab_core::EngineError::from)?;
        let room = judge.config().max_seq_len.saturating_sub(context.len());
        let tokens = &tokens[..tokens.len().min(room)];
        let ppl = if tokens.is_empty() {
            entry.2 += 1;
            None
        } else {
            let lp = score_tokens(judge, &context, tokens)?;
            let p = perplexity(&lp)?;
            entry.1.push(p);
            Some(p)
        };
        per_record.push(vec![r.prompt_id.clone().into(), r.record_index.into(), tokens.len().into(), opt(ppl)]);
    }
    let mut table = Table::new(&["arm", "scale", "n", "mean", "std", "skipped_empty"]);
    let mut summary = serde_json::Map::new();
    for ((_, arm), (scale, ppls, skipped)) in &by_arm {
        table.push(vec![
            arm.clone().into(),
            scale.map_or(Value::Null, num),
            ppls.len().into(),
            opt(mean(ppls)),
            opt(std_dev(ppls)),
            (*skipped).into(),
        ]);
        summary.insert(arm.clone(), opt(mean(ppls)));
    }
    let mut parts = Parts::default();
    parts.summary.insert("mean_perplexity_by_arm".into(), Value::Object(summary));
    parts.summary.insert("judge_vocab_size".into(), judge.config().vocab_size.into());
    if let Some(d) = &pc.distortion {
        parts.summary.insert("distortion_layers".into(), distortion_layers(d, n_layers)?.into());
        parts.summary.insert("distortion_source_layer".into(), d.source_layer.unwrap_or(patch.layer).into());
    }
    parts.tables.insert("perplexity".into(), table);
    parts.tables.insert("perplexity_records".into(), per_record);
    parts.notes.push("std is the sample standard deviation; empty completions are skipped and counted".into());
    Ok(RunOutput {
        bundle: bundle(ctx, parts),
        records,
    })
}

/// Configured distortion layers that exist in the model.
pub(crate) fn distortion_layers(d: &DistortionSection, n_layers: usize) -> Result<Vec<usize>> {
    let layers: Vec<usize> = d.layers.iter().copied().filter(|&l| l < n_layers).collect();
    if layers.is_empty() {
        return Err(HarnessError::config(
            "perplexity.distortion.layers",
            format!("no configured layer exists in a {n_layers}-layer model"),
        ));
    }
    Ok(layers)
}
