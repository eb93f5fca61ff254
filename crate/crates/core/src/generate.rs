// SPDX-License-Identifier: MIT OR Apache-2.0

//! Chat rendering, sampling and seeded generation.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::forward::{log_softmax, softmax, ForwardOptions, ResolvedPatch, Session};
use crate::intervene::InterventionSpec;
use crate::model::TransformerModel;
use crate::rng::CounterRng;
use crate::tokenizer::Tokenizer;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Chat template
// ---------------------------------------------------------------------------

/// Marker strings wrapped around a single user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTemplate {
    pub prelude: String,
    pub user_open: String,
    pub user_close: String,
    pub assistant_open: String,
}

impl Default for ChatTemplate {
    fn default() -> Self {
        Self {
            prelude: "<|endoftext|>".into(),
            user_open: "<|user|>\n".into(),
            user_close: "\n".into(),
            assistant_open: "<|assistant|>".into(),
        }
    }
}

/// A rendered prompt with per-token byte offsets into `text`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub tokens: Vec<u32>,
    pub offsets: Vec<Range<usize>>,
    /// Byte range of the user text within `text`.
    pub user_span: Range<usize>,
}

impl RenderedPrompt {
    /// Encode `text` with no template; the user span covers all of it.
    pub fn bare(tok: &Tokenizer, text: &str) -> Result<Self> {
        let spans = tok.tokenize_with_offsets(text)?;
        Ok(Self {
            text: text.to_string(),
            tokens: spans.iter().map(|s| s.id).collect(),
            offsets: spans.into_iter().map(|s| s.range).collect(),
            user_span: 0..text.len(),
        })
    }

    /// Index of the final prompt token.
    pub fn last_index(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }

    /// Index of the last token overlapping byte range `span` of `text`.
    pub fn last_token_in(&self, span: Range<usize>) -> Option<usize> {
        self.offsets
            .iter()
            .rposition(|r| r.start < span.end && span.start < r.end)
    }

    /// Index of the last token of the `occurrence`-th match of `needle` in
    /// the user text.
    pub fn last_token_of(&self, needle: &str, occurrence: usize) -> Option<usize> {
        let user = &self.text[self.user_span.clone()];
        let (at, _) = user.match_indices(needle).nth(occurrence)?;
        let start = self.user_span.start + at;
        self.last_token_in(start..start + needle.len())
    }
}

impl ChatTemplate {
    /// Every non-blank marker must tokenize to special tokens plus
    /// whitespace.
    pub fn validate(&self, tok: &Tokenizer) -> Result<()> {
        for (field, marker) in [
            ("prelude", &self.prelude),
            ("user_open", &self.user_open),
            ("user_close", &self.user_close),
            ("assistant_open", &self.assistant_open),
        ] {
            let core = marker.trim();
            if core.is_empty() {
                continue;
            }
            let ids = tok.tokenize(core)?;
            if ids.len() != 1 || !tok.is_special(ids[0]) {
                return Err(EngineError::InvalidTemplate(format!(
                    "{field} marker {core:?} is not a special token"
                )));
            }
        }
        Ok(())
    }

    /// Render one user turn. Each part is tokenized on its own so the
    /// markers never merge with user text.
    pub fn render(&self, tok: &Tokenizer, user_text: &str) -> Result<RenderedPrompt> {
        let mut out = RenderedPrompt {
            text: String::new(),
            tokens: Vec::new(),
            offsets: Vec::new(),
            user_span: 0..0,
        };
        for (i, part) in [
            self.prelude.as_str(),
            self.user_open.as_str(),
            user_text,
            self.user_close.as_str(),
            self.assistant_open.as_str(),
        ]
        .into_iter()
        .enumerate()
        {
            let base = out.text.len();
            for span in tok.tokenize_with_offsets(part)? {
                out.tokens.push(span.id);
                out.offsets.push(span.range.start + base..span.range.end + base);
            }
            out.text.push_str(part);
            if i == 2 {
                out.user_span = base..out.text.len();
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn default_max_tokens() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default)]
    pub seed: u64,
    /// Token ids that end generation; not included in the completion.
    #[serde(default)]
    pub stop_tokens: Vec<u32>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: default_max_tokens(),
            seed: 0,
            stop_tokens: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(EngineError::InvalidSampler(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(EngineError::InvalidSampler("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draw from `softmax(ln(p) / temperature)`; temperature 0 is argmax.
pub fn sample_next(probs: &[f64], temperature: f64, rng: &mut CounterRng) -> Result<u32> {
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(EngineError::InvalidSampler(format!(
            "temperature must be finite and >= 0, got {temperature}"
        )));
    }
    if probs.is_empty() {
        return Err(EngineError::InvalidSampler("empty distribution".into()));
    }
    if temperature == 0.0 {
        return Ok(argmax(probs) as u32);
    }
    let logs: Vec<f64> = probs.iter().map(|p| p.ln() / temperature).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    Ok(draw(&weights, rng))
}

/// Same as [`sample_next`] but starting from logits.
pub fn sample_logits(logits: &[f32], temperature: f64, rng: &mut CounterRng) -> Result<u32> {
    if temperature == 0.0 {
        return Ok(argmax(logits) as u32);
    }
    sample_next(&softmax(logits), temperature, rng)
}

fn draw(weights: &[f64], rng: &mut CounterRng) -> u32 {
    let total: f64 = weights.iter().sum();
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i as u32;
            }
        }
    }
    last as u32
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopToken,
    MaxTokens,
    ContextFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub tokens: Vec<u32>,
    pub text: String,
    pub stop_reason: StopReason,
}

/// Sample a continuation of an already-prefilled session.
pub fn continue_session(
    mut session: Session<'_>,
    first_logits: Vec<f32>,
    tok: &Tokenizer,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Completion> {
    sampler.validate()?;
    let max_seq = session_max(&session);
    let mut rng = CounterRng::new(seed);
    let mut logits = first_logits;
    let mut tokens = Vec::new();
    let stop_reason = loop {
        let next = sample_logits(&logits, sampler.temperature, &mut rng)?;
        if sampler.stop_tokens.contains(&next) {
            break StopReason::StopToken;
        }
        tokens.push(next);
        if tokens.len() >= sampler.max_tokens {
            break StopReason::MaxTokens;
        }
        if session.len() >= max_seq {
            break StopReason::ContextFull;
        }
        logits = session.step(next)?;
    };
    let text = tok.detokenize(&tokens)?;
    Ok(Completion {
        tokens,
        text,
        stop_reason,
    })
}

fn session_max(session: &Session<'_>) -> usize {
    session.model().config().max_seq_len
}

/// Encode `prompt` under `patches` and sample a completion.
pub fn generate(
    model: &TransformerModel,
    tok: &Tokenizer,
    prompt: &[u32],
    patches: &[ResolvedPatch],
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Completion> {
    sampler.validate()?;
    let (session, logits) = prefill(model, prompt, patches)?;
    continue_session(session, logits, tok, sampler, seed)
}

fn prefill<'m>(
    model: &'m TransformerModel,
    prompt: &[u32],
    patches: &[ResolvedPatch],
) -> Result<(Session<'m>, Vec<f32>)> {
    let mut session = Session::new(model);
    let mut res = session.prefill(
        prompt,
        &ForwardOptions {
            patches,
            ..Default::default()
        },
    )?;
    let last = res.logits.pop().expect("non-empty prompt");
    Ok((session, last))
}

/// Sum of log-probabilities of `tokens` given `context`, one entry per token.
pub fn score_tokens(model: &TransformerModel, context: &[u32], tokens: &[u32]) -> Result<Vec<f64>> {
    let mut all = context.to_vec();
    all.extend_from_slice(tokens);
    let res = Session::new(model).prefill(&all, &ForwardOptions::default())?;
    Ok(tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| log_softmax(&res.logits[context.len() + i - 1])[t as usize])
        .collect())
}

/// One sampled completion with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub schema_version: u32,
    pub record_index: usize,
    pub prompt_id: String,
    pub rendered_prompt: String,
    pub completion_text: String,
    pub completion_tokens: Vec<u32>,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub interventions: Vec<InterventionSpec>,
    pub sampler: SamplerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A prompt plus the patches to apply while encoding it.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub prompt_id: String,
    pub prompt: RenderedPrompt,
    pub patches: Vec<ResolvedPatch>,
    pub interventions: Vec<InterventionSpec>,
}

/// Generate `repeat` completions per item. Record `k = item * repeat + r`
/// uses seed `sampler.seed + k`; output order is always by `k`.
pub fn batch_generate(
    model: &TransformerModel,
    tok: &Tokenizer,
    items: &[BatchItem],
    repeat: usize,
    sampler: &SamplerConfig,
) -> Result<Vec<GenerationRecord>> {
    sampler.validate()?;
    if repeat == 0 {
        return Err(EngineError::InvalidSampler("repeat must be >= 1".into()));
    }
    let prefilled = items
        .par_iter()
        .map(|item| prefill(model, &item.prompt.tokens, &item.patches))
        .collect::<Result<Vec<_>>>()?;
    (0..items.len() * repeat)
        .into_par_iter()
        .map(|k| {
            let i = k / repeat;
            let item = &items[i];
            let (session, logits) = &prefilled[i];
            let seed = sampler.seed.wrapping_add(k as u64);
            let c = continue_session(session.clone(), logits.clone(), tok, sampler, seed)?;
            Ok(GenerationRecord {
                schema_version: RECORD_SCHEMA_VERSION,
                record_index: k,
                prompt_id: item.prompt_id.clone(),
                rendered_prompt: item.prompt.text.clone(),
                completion_text: c.text,
                completion_tokens: c.tokens,
                stop_reason: c.stop_reason,
                seed,
                interventions: item.interventions.clone(),
                sampler: sampler.clone(),
                label: None,
            })
        })
        .collect()
}
