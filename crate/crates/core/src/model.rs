// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model configuration and immutable weights.

use serde::{Deserialize, Serialize};

use crate::error::LoadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Pre-norm layer norm with weight and bias.
    LayerNorm,
    /// RMS norm with weight only.
    RmsNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpKind {
    /// `down(gelu(up(x)))`, tanh approximation.
    Gelu,
    /// `down(silu(gate(x)) * up(x))`.
    SwiGlu,
}

fn default_eps() -> f32 {
    1e-5
}

fn default_rope_theta() -> f32 {
    10_000.0
}

/// Architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Key/value heads for grouped-query attention; defaults to `n_heads`.
    #[serde(default)]
    pub n_kv_heads: Option<usize>,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub norm_kind: NormKind,
    #[serde(default = "default_eps")]
    pub norm_eps: f32,
    pub rope_enabled: bool,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f32,
    pub mlp_kind: MlpKind,
}

impl ModelConfig {
    pub fn kv_heads(&self) -> usize {
        self.n_kv_heads.unwrap_or(self.n_heads)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn kv_dim(&self) -> usize {
        self.kv_heads() * self.head_dim()
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        let counts = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("n_kv_heads", self.kv_heads()),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(LoadError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(LoadError::InvalidConfig(
                "d_model not divisible by n_heads".to_string(),
            ));
        }
        if self.n_heads % self.kv_heads() != 0 {
            return Err(LoadError::InvalidConfig(
                "n_heads not divisible by n_kv_heads".to_string(),
            ));
        }
        if self.rope_enabled && self.head_dim() % 2 != 0 {
            return Err(LoadError::InvalidConfig(
                "rotary embeddings need an even head dimension".to_string(),
            ));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps >= 0.0) {
            return Err(LoadError::InvalidConfig("norm_eps must be finite".to_string()));
        }
        Ok(())
    }

    /// Every tensor the model expects, in canonical order, with its shape.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![("tok_embed".to_string(), vec![self.vocab_size, d])];
        if !self.rope_enabled {
            out.push(("pos_embed".to_string(), vec![self.max_seq_len, d]));
        }
        let bias = self.norm_kind == NormKind::LayerNorm;
        for l in 0..self.n_layers {
            let p = format!("layers.{l}");
            out.push((format!("{p}.attn_norm.weight"), vec![d]));
            if bias {
                out.push((format!("{p}.attn_norm.bias"), vec![d]));
            }
            out.push((format!("{p}.attn.q"), vec![d, d]));
            out.push((format!("{p}.attn.k"), vec![self.kv_dim(), d]));
            out.push((format!("{p}.attn.v"), vec![self.kv_dim(), d]));
            out.push((format!("{p}.attn.o"), vec![d, d]));
            out.push((format!("{p}.mlp_norm.weight"), vec![d]));
            if bias {
                out.push((format!("{p}.mlp_norm.bias"), vec![d]));
            }
            if self.mlp_kind == MlpKind::SwiGlu {
                out.push((format!("{p}.mlp.gate"), vec![self.d_ff, d]));
            }
            out.push((format!("{p}.mlp.up"), vec![self.d_ff, d]));
            out.push((format!("{p}.mlp.down"), vec![d, self.d_ff]));
        }
        out.push(("final_norm.weight".to_string(), vec![d]));
        if bias {
            out.push(("final_norm.bias".to_string(), vec![d]));
        }
        out.push(("unembed".to_string(), vec![self.vocab_size, d]));
        out
    }
}

/// Row-major matrix; `rows` outputs by `cols` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// `out = self · x`. Each output element is a sequential dot product,
    /// so results do not depend on how rows are scheduled across threads.
    pub fn matvec(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        const PAR_THRESHOLD: usize = 1 << 18;
        if self.rows * self.cols >= PAR_THRESHOLD {
            use rayon::prelude::*;
            out.par_iter_mut()
                .enumerate()
                .for_each(|(r, o)| *o = dot(self.row(r), x));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(self.row(r), x);
            }
        }
    }
}

fn take_norm(
    tensors: &mut std::collections::HashMap<String, (Vec<usize>, Vec<f32>)>,
    prefix: &str,
    bias: bool,
) -> Norm {
    let mut take = |n: String| tensors.remove(&n).expect("checked above").1;
    Norm {
        weight: take(format!("{prefix}.weight")),
        bias: bias.then(|| take(format!("{prefix}.bias"))),
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Norm,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub mlp_norm: Norm,
    pub w_gate: Option<Matrix>,
    pub w_up: Matrix,
    pub w_down: Matrix,
}

/// Decoder-only transformer weights. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    config: ModelConfig,
    pub(crate) tok_embed: Matrix,
    pub(crate) pos_embed: Option<Matrix>,
    pub(crate) layers: Vec<LayerWeights>,
    pub(crate) final_norm: Norm,
    pub(crate) unembed: Matrix,
    digest: String,
}

impl TransformerModel {
    /// Assemble a model from named tensors, checking every shape against
    /// the config. `digest` identifies the source bytes.
    pub fn from_tensors(
        config: ModelConfig,
        mut tensors: std::collections::HashMap<String, (Vec<usize>, Vec<f32>)>,
        digest: String,
    ) -> Result<Self, LoadError> {
        config.validate()?;
        for (name, shape) in config.tensor_layout() {
            match tensors.get(&name) {
                None => return Err(LoadError::MissingTensor(name)),
                Some((found, data)) => {
                    if *found != shape {
                        return Err(LoadError::ShapeMismatch {
                            tensor: name,
                            expected: shape,
                            found: found.clone(),
                        });
                    }
                    if data.len() != shape.iter().product::<usize>() {
                        return Err(LoadError::Truncated(format!("tensor {name} data")));
                    }
                }
            }
        }
        let expected: std::collections::HashSet<String> =
            config.tensor_layout().into_iter().map(|(n, _)| n).collect();
        let mut extra: Vec<&String> = tensors.keys().filter(|k| !expected.contains(*k)).collect();
        extra.sort();
        if let Some(name) = extra.first() {
            return Err(LoadError::UnexpectedTensor((*name).clone()));
        }

        let bias = config.norm_kind == NormKind::LayerNorm;
        let mut take = |name: &str| tensors.remove(name).expect("checked above");
        let mut matrix = |name: &str| {
            let (shape, data) = take(name);
            Matrix::from_vec(shape[0], shape[1], data)
        };
        let tok_embed = matrix("tok_embed");
        let pos_embed = (!config.rope_enabled).then(|| matrix("pos_embed"));
        let unembed = matrix("unembed");
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = format!("layers.{l}");
            let attn_norm = take_norm(&mut tensors, &format!("{p}.attn_norm"), bias);
            let mlp_norm = take_norm(&mut tensors, &format!("{p}.mlp_norm"), bias);
            let mut get = |s: &str| {
                let (shape, data) = tensors.remove(&format!("{p}.{s}")).expect("checked above");
                Matrix::from_vec(shape[0], shape[1], data)
            };
            layers.push(LayerWeights {
                attn_norm,
                wq: get("attn.q"),
                wk: get("attn.k"),
                wv: get("attn.v"),
                wo: get("attn.o"),
                mlp_norm,
                w_gate: (config.mlp_kind == MlpKind::SwiGlu).then(|| get("mlp.gate")),
                w_up: get("mlp.up"),
                w_down: get("mlp.down"),
            });
        }
        let final_norm = take_norm(&mut tensors, "final_norm", bias);
        Ok(Self {
            config,
            tok_embed,
            pos_embed,
            layers,
            final_norm,
            unembed,
            digest,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Hex SHA-256 of the bytes the model was loaded from.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Tensors in canonical order, for writing back to disk.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut lookup: std::collections::HashMap<String, &[f32]> = Default::default();
        lookup.insert("tok_embed".into(), &self.tok_embed.data);
        if let Some(p) = &self.pos_embed {
            lookup.insert("pos_embed".into(), &p.data);
        }
        for (l, w) in self.layers.iter().enumerate() {
            let p = format!("layers.{l}");
            lookup.insert(format!("{p}.attn_norm.weight"), &w.attn_norm.weight);
            if let Some(b) = &w.attn_norm.bias {
                lookup.insert(format!("{p}.attn_norm.bias"), b);
            }
            lookup.insert(format!("{p}.attn.q"), &w.wq.data);
            lookup.insert(format!("{p}.attn.k"), &w.wk.data);
            lookup.insert(format!("{p}.attn.v"), &w.wv.data);
            lookup.insert(format!("{p}.attn.o"), &w.wo.data);
            lookup.insert(format!("{p}.mlp_norm.weight"), &w.mlp_norm.weight);
            if let Some(b) = &w.mlp_norm.bias {
                lookup.insert(format!("{p}.mlp_norm.bias"), b);
            }
            if let Some(g) = &w.w_gate {
                lookup.insert(format!("{p}.mlp.gate"), &g.data);
            }
            lookup.insert(format!("{p}.mlp.up"), &w.w_up.data);
            lookup.insert(format!("{p}.mlp.down"), &w.w_down.data);
        }
        lookup.insert("final_norm.weight".into(), &self.final_norm.weight);
        if let Some(b) = &self.final_norm.bias {
            lookup.insert("final_norm.bias".into(), b);
        }
        lookup.insert("unembed".into(), &self.unembed.data);
        self.config
            .tensor_layout()
            .into_iter()
            .map(|(name, shape)| {
                let data = lookup[&name];
                (name, shape, data)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            n_kv_heads: None,
            d_ff: 16,
            vocab_size: 10,
            max_seq_len: 16,
            norm_kind: NormKind::RmsNorm,
            norm_eps: 1e-5,
            rope_enabled: false,
            rope_theta: 10_000.0,
            mlp_kind: MlpKind::Gelu,
        }
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut c = tiny_config();
        c.d_model = 48;
        c.n_heads = 5;
        let err = c.validate().unwrap_err();
        assert_eq!(err.to_string(), "invalid config: d_model not divisible by n_heads");
    }

    #[test]
    fn rejects_zero_counts() {
        let mut c = tiny_config();
        c.n_layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_names_are_unique() {
        let mut c = tiny_config();
        c.norm_kind = NormKind::LayerNorm;
        c.mlp_kind = MlpKind::SwiGlu;
        let layout = c.tensor_layout();
        let names: std::collections::HashSet<_> = layout.iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), layout.len());
    }

    #[test]
    fn missing_tensor_is_named() {
        let err = TransformerModel::from_tensors(tiny_config(), Default::default(), String::new())
            .unwrap_err();
        assert_eq!(err, LoadError::MissingTensor("tok_embed".into()));
    }
}
