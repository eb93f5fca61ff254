// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use patchlab_core::{batch_generate, BatchItem};
use patchlab_metrics::{mann_whitney, rank_of_diagnosis, Method, Rank};
use serde_json::{json, Value};

use super::{bundle, mean, opt, Parts};
use crate::context::{select, Context};
use crate::error::Result;
use crate::prompts;
use crate::report::{num, RunOutput, Table};

/// Rank of the correct diagnosis in sampled differential lists, per arm,
/// with Mann-Whitney tests between configured arm pairs.
pub fn run_rank(ctx: &Context) -> Result<RunOutput> {
    let cfg = &ctx.config;
    let rank = &cfg.rank;
    let n_layers = ctx.n_layers();
    let synonyms = rank
        .synonyms
        .clone()
        .unwrap_or_else(|| ctx.lexicon.diagnosis_terms(&rank.correct).into_iter().skip(1).collect());

    let mut items = Vec::new();
    for arm in &rank.arms {
        let case = match &arm.explicit {
            Some(demo) => prompts::explicit_case(&rank.case, demo),
            None => rank.case.clone(),
        };
        let prompt = ctx.render(&prompts::fill(&rank.template, prompts::CASE, &case))?;
        let (patches, interventions) = match &arm.patch {
            Some(p) => {
                let source = ctx.source(&p.source_prompt, false, &p.source_token, p.site)?;
                let target = select(&prompt, &p.target_token, None, "rank.arms.patch.target_token")?;
                let spec = source.spec(p.site, p.layer, p.window_radius, p.scale, target);
                (source.patches(&spec, n_layers)?, vec![spec])
            }
            None => (Vec::new(), Vec::new()),
        };
        items.push(BatchItem {
            prompt_id: arm.name.clone(),
            prompt,
            patches,
            interventions,
        });
    }
    let mut records = batch_generate(&ctx.model, &ctx.tokenizer, &items, rank.samples, &ctx.sampler)?;
    let ranks: Vec<Rank> = records
        .iter()
        .map(|r| rank_of_diagnosis(&r.completion_text, &rank.correct, &synonyms))
        .collect();
    for (r, k) in records.iter_mut().zip(&ranks) {
        r.label = Some(k.value().map_or_else(|| "not_found".to_string(), |v| v.to_string()));
    }

    let mut per_record = Table::new(&["arm", "record_index", "rank"]);
    let mut hist = Table::new(&["arm", "rank", "count"]);
    let mut arm_ranks: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut arm_table = Table::new(&["arm", "n", "found", "not_found", "mean_rank"]);
    for (ai, arm) in rank.arms.iter().enumerate() {
        let slice = &ranks[ai * rank.samples..(ai + 1) * rank.samples];
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut missing = 0;
        let mut found = Vec::new();
        for (r, k) in slice.iter().enumerate() {
            let idx = ai * rank.samples + r;
            match k.value() {
                Some(v) => {
                    *counts.entry(v).or_default() += 1;
                    found.push(v as f64);
                    per_record.push(vec![arm.name.clone().into(), idx.into(), v.into()]);
                }
                None => {
                    missing += 1;
                    per_record.push(vec![arm.name.clone().into(), idx.into(), Value::Null]);
                }
            }
        }
        for (v, c) in &counts {
            hist.push(vec![arm.name.clone().into(), (*v).into(), (*c).into()]);
        }
        if missing > 0 {
            hist.push(vec![arm.name.clone().into(), "not_found".into(), missing.into()]);
        }
        arm_table.push(vec![
            arm.name.clone().into(),
            slice.len().into(),
            found.len().into(),
            missing.into(),
            opt(mean(&found)),
        ]);
        arm_ranks.insert(&arm.name, found);
    }

    let mut tests = Table::new(&["a", "b", "n_a", "n_b", "mean_rank_a", "mean_rank_b", "u", "p", "method"]);
    for [a, b] in &rank.compare {
        let (xa, xb) = (&arm_ranks[a.as_str()], &arm_ranks[b.as_str()]);
        let mw = mann_whitney(xa, xb).ok();
        tests.push(vec![
            a.clone().into(),
            b.clone().into(),
            xa.len().into(),
            xb.len().into(),
            opt(mean(xa)),
            opt(mean(xb)),
            mw.as_ref().map_or(Value::Null, |m| num(m.u)),
            mw.as_ref().map_or(Value::Null, |m| num(m.p)),
            mw.as_ref().map_or(Value::Null, |m| {
                match m.method {
                    Method::Exact => "exact",
                    Method::Normal => "normal",
                }
                .into()
            }),
        ]);
    }
    let mut parts = Parts::default();
    parts.summary.insert("correct".into(), rank.correct.clone().into());
    parts.summary.insert("synonyms".into(), json!(synonyms));
    parts.tables.insert("ranks".into(), per_record);
    parts.tables.insert("rank_histogram".into(), hist);
    parts.tables.insert("rank_arms".into(), arm_table);
    parts.tables.insert("mann_whitney".into(), tests);
    parts.notes.push("lists without the correct diagnosis are excluded from the tests and counted as not_found".into());
    Ok(RunOutput {
        bundle: bundle(ctx, parts),
        records,
    })
}
