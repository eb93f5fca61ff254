// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use patchlab_core::{batch_generate, BatchItem, HookSite};
use patchlab_metrics::{
    delta_risk, neutralize_gender, parse_risk_answer, relaxed_assignment, strict_assignment, RiskAnswer,
    RiskOutcomes,
};
use serde::Deserialize;
use serde_json::Value;

use super::{bundle, mean, opt, Parts};
use crate::config::TokenRule;
use crate::context::{select, Context};
use crate::error::{HarnessError, Result};
use crate::notes::generate_notes;
use crate::prompts;
use crate::report::{num, RunOutput, Table};

#[derive(Deserialize)]
struct NoteLine {
    id: String,
    text: String,
}

/// Notes from a JSON-lines file of `{"id": ..., "text": ...}` objects.
pub fn load_notes(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config("risk.notes_path", format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<NoteLine>(l)
                .map(|n| (n.id, n.text))
                .map_err(|e| HarnessError::config("risk.notes_path", format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn answer_label(a: RiskAnswer) -> &'static str {
    match a {
        RiskAnswer::Yes => "yes",
        RiskAnswer::No => "no",
        RiskAnswer::Unknown => "unknown",
    }
}

/// Risk-answer disparity between two demographic patches applied to the
/// same gender-neutralized notes.
pub fn run_risk(ctx: &Context) -> Result<RunOutput> {
    let cfg = &ctx.config;
    let risk = &cfg.risk;
    let n_layers = ctx.n_layers();
    let notes: Vec<(String, String)> = match &risk.notes_path {
        Some(p) => load_notes(&cfg.resolve(p))?,
        None => generate_notes(&risk.notes).into_iter().map(|n| (n.id, n.text)).collect(),
    };
    if notes.is_empty() {
        return Err(HarnessError::config("risk.notes", "no notes"));
    }
    let neutral: Vec<String> = notes
        .iter()
        .map(|(_, t)| neutralize_gender(t, &ctx.lexicon.neutralize).text)
        .collect();

    // items ordered pair, prompt, note, arm
    let mut items = Vec::new();
    for pair in &risk.pairs {
        let sources = [&pair.a, &pair.b].map(|label| {
            ctx.source(&prompts::source_prompt(label), false, &TokenRule::Last, pair.site)
        });
        let [sa, sb] = sources;
        let (sa, sb) = (sa?, sb?);
        for (pi, template) in pair.prompts.prompts().iter().enumerate() {
            for ((id, _), text) in notes.iter().zip(&neutral) {
                let prompt = ctx.render(&prompts::fill(template, prompts::BHC, text))?;
                let target = select(&prompt, &TokenRule::Last, None, "risk")?;
                for (arm, src) in [("a", &sa), ("b", &sb)] {
                    let spec = src.spec(pair.site, pair.layer, 0, pair.scale, target);
                    items.push(BatchItem {
                        prompt_id: format!("{}|p{pi}|{id}|{arm}", pair.name),
                        prompt: prompt.clone(),
                        patches: src.patches(&spec, n_layers)?,
                        interventions: vec![spec],
                    });
                }
            }
        }
    }
    let mut records = batch_generate(&ctx.model, &ctx.tokenizer, &items, risk.samples, &ctx.sampler)?;
    let answers: Vec<RiskAnswer> = records
        .iter()
        .map(|r| parse_risk_answer(&r.completion_text, &ctx.lexicon))
        .collect();
    for (r, a) in records.iter_mut().zip(&answers) {
        r.label = Some(answer_label(*a).to_string());
    }

    let s = risk.samples;
    let n_notes = notes.len();
    let record = |pair: usize, pi: usize, note: usize, arm: usize, sample: usize| {
        ((((pair * 4 + pi) * n_notes + note) * 2 + arm) * s) + sample
    };
    let mut outcomes = Table::new(&["pair", "prompt", "note_id", "sample", "record_a", "record_b", "u", "v"]);
    let mut deltas = Table::new(&["pair", "prompt", "delta_risk", "n", "unknown"]);
    let mut assignment = Table::new(&["pair", "prompt", "arm", "target", "counterfactual", "strict", "relaxed", "n"]);
    let mut summary = serde_json::Map::new();
    for (qi, pair) in risk.pairs.iter().enumerate() {
        let labels = [pair.a.to_lowercase(), pair.b.to_lowercase()];
        let mut per_prompt = Vec::new();
        for pi in 0..4 {
            let (mut ids, mut u, mut v, mut unknown) = (Vec::new(), Vec::new(), Vec::new(), 0usize);
            for (ni, (id, _)) in notes.iter().enumerate() {
                for r in 0..s {
                    let (ka, kb) = (record(qi, pi, ni, 0, r), record(qi, pi, ni, 1, r));
                    match (answers[ka].as_bit(), answers[kb].as_bit()) {
                        (Some(x), Some(y)) => {
                            ids.push(format!("{id}#{r}"));
                            u.push(x);
                            v.push(y);
                            outcomes.push(vec![
                                pair.name.clone().into(),
                                pi.into(),
                                id.clone().into(),
                                r.into(),
                                ka.into(),
                                kb.into(),
                                x.into(),
                                y.into(),
                            ]);
                        }
                        _ => unknown += 1,
                    }
                }
            }
            let n = u.len();
            let d = RiskOutcomes::new(ids, u, v).and_then(|o| delta_risk(&o)).ok();
            if let Some(d) = d {
                per_prompt.push(d);
            }
            deltas.push(vec![pair.name.clone().into(), pi.into(), opt(d), n.into(), unknown.into()]);

            if prompts::DEMOGRAPHIC_STATING_PROMPTS.contains(&pi) {
                for arm in 0..2 {
                    let (target, counter) = (&labels[arm], &labels[1 - arm]);
                    let (mut strict, mut relaxed, mut n) = (0usize, 0usize, 0usize);
                    for ni in 0..n_notes {
                        for r in 0..s {
                            let text = &records[record(qi, pi, ni, arm, r)].completion_text;
                            strict += strict_assignment(text, target, counter, &ctx.lexicon)? as usize;
                            relaxed += relaxed_assignment(text, counter, &ctx.lexicon)? as usize;
                            n += 1;
                        }
                    }
                    assignment.push(vec![
                        pair.name.clone().into(),
                        pi.into(),
                        ["a", "b"][arm].into(),
                        target.clone().into(),
                        counter.clone().into(),
                        num(strict as f64 / n as f64),
                        num(relaxed as f64 / n as f64),
                        n.into(),
                    ]);
                }
            }
        }
        summary.insert(pair.name.clone(), opt(mean(&per_prompt)));
    }
    let mut parts = Parts::default();
    parts.summary.insert("mean_delta_risk".into(), Value::Object(summary));
    parts.summary.insert("notes".into(), n_notes.into());
    parts.summary.insert(
        "site".into(),
        risk.pairs.first().map_or(HookSite::ResidualPost, |p| p.site).as_str().into(),
    );
    parts.tables.insert("risk_outcomes".into(), outcomes);
    parts.tables.insert("risk".into(), deltas);
    parts.tables.insert("assignment".into(), assignment);
    parts.notes.push(
        "u is the answer under source a, v under source b; pairs with an unknown answer are excluded and counted".into(),
    );
    parts.notes.push("strict assignment requires the target stated and the counterfactual absent".into());
    Ok(RunOutput {
        bundle: bundle(ctx, parts),
        records,
    })
}
