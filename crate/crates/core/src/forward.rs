// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hooked forward pass with a per-session KV cache.
//!
//! Per layer, for every position:
//!
//! ```text
//! a = attn(norm(x))        -> hook attn_out
//! x = x + a
//! m = mlp(norm(x))         -> hook mlp_out
//! x = x + m                -> hook residual_post
//! ```
//!
//! At each hook the value is first replaced by a matching patch (if any)
//! and then captured (if the site was requested).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngineError, Result};
use crate::model::{dot, LayerWeights, Norm, TransformerModel};

// ---------------------------------------------------------------------------
// Hook types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookSite {
    /// MLP block output before the residual addition.
    MlpOut,
    /// Attention block output before the residual addition.
    AttnOut,
    /// Residual stream after the full layer.
    ResidualPost,
}

impl HookSite {
    pub const ALL: [HookSite; 3] = [HookSite::MlpOut, HookSite::AttnOut, HookSite::ResidualPost];

    pub fn as_str(self) -> &'static str {
        match self {
            HookSite::MlpOut => "mlp_out",
            HookSite::AttnOut => "attn_out",
            HookSite::ResidualPost => "residual_post",
        }
    }
}

impl std::fmt::Display for HookSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HookSite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        HookSite::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| format!("unknown hook site {s:?} (expected mlp_out, attn_out or residual_post)"))
    }
}

/// Key of a captured activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceKey {
    pub layer: usize,
    pub site: HookSite,
    pub token: usize,
}

/// Activations captured from one forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationTrace {
    pub entries: BTreeMap<TraceKey, Vec<f32>>,
    pub source_prompt_hash: String,
}

impl ActivationTrace {
    pub fn get(&self, layer: usize, site: HookSite, token: usize) -> Option<&[f32]> {
        self.entries
            .get(&TraceKey { layer, site, token })
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A concrete replacement applied during prompt encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPatch {
    pub layer: usize,
    pub site: HookSite,
    pub token_index: usize,
    /// Already scaled.
    pub vector: Vec<f32>,
}

/// One softmax row of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub layer: usize,
    pub head: usize,
    pub position: usize,
    pub weights: Vec<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardOptions<'a> {
    pub capture: BTreeSet<HookSite>,
    pub patches: &'a [ResolvedPatch],
    pub record_attention: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// One row of `vocab_size` logits per input position.
    pub logits: Vec<Vec<f32>>,
    pub trace: ActivationTrace,
    pub attention: Vec<AttentionRow>,
}

impl ForwardResult {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    /// Softmax of the logits at `position`.
    pub fn next_token_distribution(&self, position: usize) -> Result<Vec<f64>> {
        let row = self
            .logits
            .get(position)
            .ok_or(EngineError::PositionOutOfRange {
                position,
                len: self.logits.len(),
            })?;
        Ok(softmax(row))
    }
}

/// Numerically stable softmax computed in f64.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax in f64.
pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = logits.iter().map(|&l| (l as f64 - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l as f64 - lse).collect()
}

/// Hex SHA-256 of a token sequence.
pub fn hash_tokens(tokens: &[u32]) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.to_le_bytes());
    }
    hex::encode(h.finalize())
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

/// Incremental decoding state. Owns its KV cache; the model is shared.
#[derive(Debug, Clone)]
pub struct Session<'m> {
    model: &'m TransformerModel,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

struct Scratch {
    x: Vec<f32>,
    h: Vec<f32>,
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    heads: Vec<f32>,
    attn: Vec<f32>,
    gate: Vec<f32>,
    up: Vec<f32>,
    mlp: Vec<f32>,
    scores: Vec<f32>,
    logits: Vec<f32>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m TransformerModel) -> Self {
        let n = model.config().n_layers;
        Self {
            model,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
        }
    }

    pub fn model(&self) -> &'m TransformerModel {
        self.model
    }

    /// Number of cached positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        let cfg = self.model.config();
        if tokens.is_empty() {
            return Err(EngineError::EmptySequence);
        }
        let total = self.len + tokens.len();
        if total > cfg.max_seq_len {
            return Err(EngineError::SequenceTooLong {
                len: total,
                max: cfg.max_seq_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(EngineError::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        Ok(())
    }

    /// Encode `tokens` (appended after anything already cached), applying
    /// patches and capturing requested sites. Patch and trace positions are
    /// absolute.
    pub fn prefill(&mut self, tokens: &[u32], opts: &ForwardOptions<'_>) -> Result<ForwardResult> {
        self.check_tokens(tokens)?;
        let cfg = self.model.config();
        let end = self.len + tokens.len();
        let mut patches: HashMap<TraceKey, &[f32]> = HashMap::new();
        for p in opts.patches {
            if p.layer >= cfg.n_layers {
                return Err(EngineError::LayerOutOfRange {
                    layer: p.layer,
                    n_layers: cfg.n_layers,
                });
            }
            if p.token_index < self.len || p.token_index >= end {
                return Err(EngineError::PositionOutOfRange {
                    position: p.token_index,
                    len: end,
                });
            }
            if p.vector.len() != cfg.d_model {
                return Err(EngineError::VectorLength {
                    expected: cfg.d_model,
                    found: p.vector.len(),
                });
            }
            if p.vector.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::NonFinite {
                    layer: p.layer,
                    position: p.token_index,
                });
            }
            patches.insert(
                TraceKey {
                    layer: p.layer,
                    site: p.site,
                    token: p.token_index,
                },
                &p.vector,
            );
        }

        let mut result = ForwardResult {
            logits: Vec::with_capacity(tokens.len()),
            trace: ActivationTrace {
                entries: BTreeMap::new(),
                source_prompt_hash: hash_tokens(tokens),
            },
            attention: Vec::new(),
        };
        let mut s = self.scratch();
        for &tok in tokens {
            self.advance(tok, &mut s, &patches, opts, &mut result);
            result.logits.push(s.logits.clone());
        }
        Ok(result)
    }

    /// Decode one token without hooks; returns its logits.
    pub fn step(&mut self, token: u32) -> Result<Vec<f32>> {
        self.check_tokens(std::slice::from_ref(&token))?;
        let mut s = self.scratch();
        let mut sink = ForwardResult {
            logits: Vec::new(),
            trace: ActivationTrace::default(),
            attention: Vec::new(),
        };
        self.advance(token, &mut s, &HashMap::new(), &ForwardOptions::default(), &mut sink);
        Ok(s.logits)
    }

    fn scratch(&self) -> Scratch {
        let cfg = self.model.config();
        let d = cfg.d_model;
        Scratch {
            x: vec![0.0; d],
            h: vec![0.0; d],
            q: vec![0.0; d],
            k: vec![0.0; cfg.kv_dim()],
            v: vec![0.0; cfg.kv_dim()],
            heads: vec![0.0; d],
            attn: vec![0.0; d],
            gate: vec![0.0; cfg.d_ff],
            up: vec![0.0; cfg.d_ff],
            mlp: vec![0.0; d],
            scores: Vec::with_capacity(cfg.max_seq_len),
            logits: vec![0.0; cfg.vocab_size],
        }
    }

    fn advance(
        &mut self,
        token: u32,
        s: &mut Scratch,
        patches: &HashMap<TraceKey, &[f32]>,
        opts: &ForwardOptions<'_>,
        out: &mut ForwardResult,
    ) {
        let model = self.model;
        let pos = self.len;
        s.x.copy_from_slice(model.tok_embed.row(token as usize));
        if let Some(pe) = &model.pos_embed {
            for (x, p) in s.x.iter_mut().zip(pe.row(pos)) {
                *x += p;
            }
        }
        for (l, w) in model.layers.iter().enumerate() {
            let hook = |site: HookSite, v: &mut [f32], out: &mut ForwardResult| {
                let key = TraceKey {
                    layer: l,
                    site,
                    token: pos,
                };
                if let Some(r) = patches.get(&key) {
                    v.copy_from_slice(r);
                }
                if opts.capture.contains(&site) {
                    out.trace.entries.insert(key, v.to_vec());
                }
            };

            apply_norm(model, &w.attn_norm, &s.x, &mut s.h);
            self.attention(l, w, pos, s, opts.record_attention, out);
            hook(HookSite::AttnOut, &mut s.attn, out);
            for (x, a) in s.x.iter_mut().zip(&s.attn) {
                *x += a;
            }

            apply_norm(model, &w.mlp_norm, &s.x, &mut s.h);
            mlp(w, s);
            hook(HookSite::MlpOut, &mut s.mlp, out);
            for (x, m) in s.x.iter_mut().zip(&s.mlp) {
                *x += m;
            }
            hook(HookSite::ResidualPost, &mut s.x, out);
        }
        apply_norm(model, &model.final_norm, &s.x, &mut s.h);
        model.unembed.matvec(&s.h, &mut s.logits);
        self.len += 1;
    }

    fn attention(
        &mut self,
        l: usize,
        w: &LayerWeights,
        pos: usize,
        s: &mut Scratch,
        record: bool,
        out: &mut ForwardResult,
    ) {
        let cfg = self.model.config();
        let dh = cfg.head_dim();
        let kv_dim = cfg.kv_dim();
        let group = cfg.n_heads / cfg.kv_heads();
        w.wq.matvec(&s.h, &mut s.q);
        w.wk.matvec(&s.h, &mut s.k);
        w.wv.matvec(&s.h, &mut s.v);
        if cfg.rope_enabled {
            rope(&mut s.q, dh, pos, cfg.rope_theta);
            rope(&mut s.k, dh, pos, cfg.rope_theta);
        }
        self.keys[l].extend_from_slice(&s.k);
        self.values[l].extend_from_slice(&s.v);
        let keys = &self.keys[l];
        let values = &self.values[l];
        let n = pos + 1;
        let scale = 1.0 / (dh as f32).sqrt();
        for head in 0..cfg.n_heads {
            let kvh = head / group;
            let q = &s.q[head * dh..(head + 1) * dh];
            s.scores.clear();
            for t in 0..n {
                let k = &keys[t * kv_dim + kvh * dh..t * kv_dim + (kvh + 1) * dh];
                s.scores.push(dot(q, k) * scale);
            }
            let max = s.scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for sc in s.scores.iter_mut() {
                *sc = (*sc - max).exp();
                sum += *sc;
            }
            for sc in s.scores.iter_mut() {
                *sc /= sum;
            }
            let o = &mut s.heads[head * dh..(head + 1) * dh];
            o.fill(0.0);
            for (t, &wt) in s.scores.iter().enumerate() {
                let v = &values[t * kv_dim + kvh * dh..t * kv_dim + (kvh + 1) * dh];
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi += wt * vi;
                }
            }
            if record {
                out.attention.push(AttentionRow {
                    layer: l,
                    head,
                    position: pos,
                    weights: s.scores.clone(),
                });
            }
        }
        w.wo.matvec(&s.heads, &mut s.attn);
    }
}

fn apply_norm(model: &TransformerModel, norm: &Norm, x: &[f32], out: &mut [f32]) {
    let eps = model.config().norm_eps;
    let n = x.len() as f32;
    match &norm.bias {
        Some(bias) => {
            let mean = x.iter().sum::<f32>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for i in 0..x.len() {
                out[i] = (x[i] - mean) * inv * norm.weight[i] + bias[i];
            }
        }
        None => {
            let ms = x.iter().map(|v| v * v).sum::<f32>() / n;
            let inv = 1.0 / (ms + eps).sqrt();
            for i in 0..x.len() {
                out[i] = x[i] * inv * norm.weight[i];
            }
        }
    }
}

fn mlp(w: &LayerWeights, s: &mut Scratch) {
    w.w_up.matvec(&s.h, &mut s.up);
    match &w.w_gate {
        Some(gate) => {
            gate.matvec(&s.h, &mut s.gate);
            for (u, g) in s.up.iter_mut().zip(&s.gate) {
                *u *= silu(*g);
            }
        }
        None => {
            for u in s.up.iter_mut() {
                *u = gelu(*u);
            }
        }
    }
    w.w_down.matvec(&s.up, &mut s.mlp);
}

/// Tanh-approximated GELU.
pub fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Rotary embedding over adjacent pairs `(2i, 2i+1)` within each head.
fn rope(v: &mut [f32], dh: usize, pos: usize, theta: f32) {
    for head in v.chunks_exact_mut(dh) {
        for i in 0..dh / 2 {
            let freq = theta.powf(-2.0 * i as f32 / dh as f32);
            let angle = pos as f32 * freq;
            let (sin, cos) = angle.sin_cos();
            let a = head[2 * i];
            let b = head[2 * i + 1];
            head[2 * i] = a * cos - b * sin;
            head[2 * i + 1] = a * sin + b * cos;
        }
    }
}

// ---------------------------------------------------------------------------
// One-shot entry points
// ---------------------------------------------------------------------------

/// Full forward pass over `tokens` from an empty cache.
pub fn forward(
    model: &TransformerModel,
    tokens: &[u32],
    capture: &BTreeSet<HookSite>,
    patches: &[ResolvedPatch],
) -> Result<ForwardResult> {
    Session::new(model).prefill(
        tokens,
        &ForwardOptions {
            capture: capture.clone(),
            patches,
            record_attention: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[3.0; 7]);
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_spike() {
        let mut l = vec![0.0f32; 10];
        l[4] = 1e6;
        let p = softmax(&l);
        assert!((p[4] - 1.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let l = [0.5f32, -1.0, 2.0];
        let p = softmax(&l);
        for (a, b) in log_softmax(&l).iter().zip(p) {
            assert!((a.exp() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_odd_part_is_identity() {
        for x in [-3.0f32, -0.5, 0.0, 0.7, 2.5] {
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-6);
        }
    }

    #[test]
    fn rope_preserves_norm() {
        let mut v: Vec<f32> = (0..8).map(|i| i as f32 - 3.5).collect();
        let before: f32 = v.iter().map(|x| x * x).sum();
        rope(&mut v, 4, 13, 10_000.0);
        let after: f32 = v.iter().map(|x| x * x).sum();
        assert!((before - after).abs() < 1e-4);
    }

    #[test]
    fn hook_site_parse() {
        for h in HookSite::ALL {
            assert_eq!(h.as_str().parse::<HookSite>().unwrap(), h);
        }
        assert!("mlp".parse::<HookSite>().is_err());
    }
}
