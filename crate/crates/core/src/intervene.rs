// SPDX-License-Identifier: MIT OR Apache-2.0

//! Capturing source activations and resolving them into patches.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngineError, Result};
use crate::forward::{forward, ActivationTrace, HookSite, ResolvedPatch};
use crate::model::TransformerModel;
use crate::rng::CounterRng;

pub const INTERVENTION_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    INTERVENTION_SCHEMA_VERSION
}

/// A layer-aligned activation patch from a source prompt into a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub source_prompt: String,
    pub source_token_index: usize,
    pub site: HookSite,
    pub target_token_index: usize,
    pub layer: usize,
    #[serde(default)]
    pub window_radius: usize,
    pub scale: f64,
}

impl InterventionSpec {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.schema_version != INTERVENTION_SCHEMA_VERSION {
            return Err(EngineError::InvalidIntervention(format!(
                "schema_version {} unsupported",
                self.schema_version
            )));
        }
        if self.layer >= n_layers {
            return Err(EngineError::LayerOutOfRange {
                layer: self.layer,
                n_layers,
            });
        }
        validate_scale(self.scale)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| EngineError::InvalidIntervention(e.to_string()))?;
        validate_scale(spec.scale)?;
        if spec.schema_version != INTERVENTION_SCHEMA_VERSION {
            return Err(EngineError::InvalidIntervention(format!(
                "schema_version {} unsupported",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

pub fn validate_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(EngineError::InvalidIntervention(format!(
            "scale must be finite and > 0, got {scale}"
        )))
    }
}

/// `{layer-radius ..= layer+radius} ∩ [0, n_layers-1]`, ascending.
pub fn resolve_window(layer: usize, radius: usize, n_layers: usize) -> Vec<usize> {
    if n_layers == 0 {
        return Vec::new();
    }
    let lo = layer.saturating_sub(radius);
    let hi = layer.saturating_add(radius).min(n_layers - 1);
    (lo..=hi).collect()
}

/// Hex SHA-256 of prompt text.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Capture every layer of `sites` at every position of `tokens`.
pub fn capture(
    model: &TransformerModel,
    tokens: &[u32],
    sites: &BTreeSet<HookSite>,
) -> Result<ActivationTrace> {
    if sites.is_empty() {
        return Ok(ActivationTrace {
            entries: Default::default(),
            source_prompt_hash: crate::forward::hash_tokens(tokens),
        });
    }
    Ok(forward(model, tokens, sites, &[])?.trace)
}

/// One patch per window layer, each using the source vector captured at
/// that same layer, multiplied by `scale`.
pub fn resolve_intervention(
    spec: &InterventionSpec,
    source: &ActivationTrace,
    n_layers: usize,
) -> Result<Vec<ResolvedPatch>> {
    spec.validate(n_layers)?;
    resolve_window(spec.layer, spec.window_radius, n_layers)
        .into_iter()
        .map(|layer| {
            let v = source
                .get(layer, spec.site, spec.source_token_index)
                .ok_or_else(|| EngineError::MissingCapture {
                    layer,
                    site: spec.site.to_string(),
                    token: spec.source_token_index,
                })?;
            Ok(ResolvedPatch {
                layer,
                site: spec.site,
                token_index: spec.target_token_index,
                vector: scale_vector(v, spec.scale),
            })
        })
        .collect()
}

pub fn scale_vector(v: &[f32], scale: f64) -> Vec<f32> {
    let c = scale as f32;
    v.iter().map(|x| x * c).collect()
}

/// Parameters of the random-token distortion baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub token_fraction: f64,
    pub layers: Vec<usize>,
    pub scale: f64,
    pub site: HookSite,
    pub source_token_index: usize,
    /// Take every patch from this source layer; `None` aligns source and
    /// target layers.
    #[serde(default)]
    pub source_layer: Option<usize>,
    pub seed: u64,
}

impl Default for DistortionParams {
    fn default() -> Self {
        Self {
            token_fraction: 0.5,
            layers: vec![0, 4, 8, 12, 16, 20, 24],
            scale: 20.0,
            site: HookSite::MlpOut,
            source_token_index: 0,
            source_layer: None,
            seed: 0,
        }
    }
}

/// Number of positions the baseline patches: `floor(fraction * n + 0.5)`.
pub fn distortion_count(fraction: f64, n_tokens: usize) -> usize {
    ((fraction * n_tokens as f64) + 0.5).floor() as usize
}

/// Patch a seeded random subset of target positions at every listed layer.
/// Positions come out ascending; patches are ordered by (position, layer).
pub fn distortion_baseline(
    n_layers: usize,
    target_len: usize,
    source: &ActivationTrace,
    params: &DistortionParams,
) -> Result<Vec<ResolvedPatch>> {
    if target_len == 0 {
        return Err(EngineError::EmptySequence);
    }
    if !(params.token_fraction > 0.0 && params.token_fraction <= 1.0) {
        return Err(EngineError::InvalidIntervention(format!(
            "token_fraction must be in (0, 1], got {}",
            params.token_fraction
        )));
    }
    validate_scale(params.scale)?;
    if let Some(&layer) = params.layers.iter().find(|&&l| l >= n_layers) {
        return Err(EngineError::LayerOutOfRange { layer, n_layers });
    }
    let k = distortion_count(params.token_fraction, target_len).min(target_len);
    let mut rng = CounterRng::new(params.seed);
    let mut order: Vec<usize> = (0..target_len).collect();
    for i in 0..k {
        let j = i + rng.below((target_len - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();

    let mut out = Vec::with_capacity(k * params.layers.len());
    for &pos in &chosen {
        for &layer in &params.layers {
            let from = params.source_layer.unwrap_or(layer);
            let v = source
                .get(from, params.site, params.source_token_index)
                .ok_or_else(|| EngineError::MissingCapture {
                    layer: from,
                    site: params.site.to_string(),
                    token: params.source_token_index,
                })?;
            out.push(ResolvedPatch {
                layer,
                site: params.site,
                token_index: pos,
                vector: scale_vector(v, params.scale),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::TraceKey;
    use proptest::prelude::*;

    fn trace(n_layers: usize, token: usize) -> ActivationTrace {
        let mut t = ActivationTrace::default();
        for l in 0..n_layers {
            t.entries.insert(
                TraceKey {
                    layer: l,
                    site: HookSite::MlpOut,
                    token,
                },
                vec![l as f32, 1.5, -0.25],
            );
        }
        t
    }

    fn spec(layer: usize, w: usize, c: f64) -> InterventionSpec {
        InterventionSpec {
            schema_version: 1,
            source_prompt: "The patient is Male".into(),
            source_token_index: 3,
            site: HookSite::MlpOut,
            target_token_index: 5,
            layer,
            window_radius: w,
            scale: c,
        }
    }

    #[test]
    fn window_examples() {
        assert_eq!(resolve_window(18, 1, 32), vec![17, 18, 19]);
        assert_eq!(resolve_window(7, 0, 32), vec![7]);
        assert_eq!(resolve_window(0, 2, 32), vec![0, 1, 2]);
        assert_eq!(resolve_window(31, 3, 32), vec![28, 29, 30, 31]);
    }

    #[test]
    fn single_layer_doubled() {
        let p = resolve_intervention(&spec(18, 0, 2.0), &trace(32, 3), 32).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].layer, 18);
        assert_eq!(p[0].token_index, 5);
        assert_eq!(p[0].vector, vec![36.0, 3.0, -0.5]);
    }

    #[test]
    fn window_clamps_at_bottom() {
        let p = resolve_intervention(&spec(4, 5, 1.0), &trace(32, 3), 32).unwrap();
        let layers: Vec<_> = p.iter().map(|p| p.layer).collect();
        assert_eq!(layers, (0..=9).collect::<Vec<_>>());
        for patch in &p {
            assert_eq!(patch.vector[0], patch.layer as f32);
        }
    }

    #[test]
    fn missing_capture_is_named() {
        let err = resolve_intervention(&spec(2, 0, 1.0), &trace(32, 0), 32).unwrap_err();
        assert_eq!(
            err,
            EngineError::MissingCapture {
                layer: 2,
                site: "mlp_out".into(),
                token: 3
            }
        );
    }

    #[test]
    fn rejects_bad_scale() {
        for c in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(resolve_intervention(&spec(2, 0, c), &trace(32, 3), 32).is_err());
        }
    }

    #[test]
    fn json_round_trip() {
        let s = spec(3, 1, 2.5);
        assert_eq!(InterventionSpec::from_json(&s.to_json()).unwrap(), s);
        let minimal = r#"{"source_prompt":"x","source_token_index":0,"site":"residual_post","target_token_index":1,"layer":0,"scale":2}"#;
        let parsed = InterventionSpec::from_json(minimal).unwrap();
        assert_eq!(parsed.window_radius, 0);
        assert_eq!(parsed.schema_version, 1);
        assert!(InterventionSpec::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn distortion_counts() {
        let t = trace(4, 0);
        let params = DistortionParams {
            layers: vec![0, 2],
            ..Default::default()
        };
        let p = distortion_baseline(4, 9, &t, &params).unwrap();
        assert_eq!(p.len(), 2 * 5);
        let tiny = DistortionParams {
            token_fraction: 0.01,
            ..params.clone()
        };
        assert!(distortion_baseline(4, 9, &t, &tiny).unwrap().is_empty());
        assert!(distortion_baseline(4, 0, &t, &params).is_err());
    }

    #[test]
    fn distortion_fixed_source_layer() {
        let t = trace(4, 0);
        let params = DistortionParams {
            layers: vec![0, 2, 3],
            source_layer: Some(1),
            ..Default::default()
        };
        let p = distortion_baseline(4, 4, &t, &params).unwrap();
        assert!(p.iter().all(|x| x.vector == vec![20.0, 30.0, -5.0]));
        assert_eq!(p.iter().map(|x| x.layer).take(3).collect::<Vec<_>>(), vec![0, 2, 3]);
    }

    #[test]
    fn distortion_is_seeded() {
        let t = trace(4, 0);
        let params = DistortionParams {
            layers: vec![1],
            ..Default::default()
        };
        let a = distortion_baseline(4, 30, &t, &params).unwrap();
        let b = distortion_baseline(4, 30, &t, &params).unwrap();
        assert_eq!(a, b);
        let other = DistortionParams { seed: 9, ..params };
        let c = distortion_baseline(4, 30, &t, &other).unwrap();
        assert_ne!(
            a.iter().map(|p| p.token_index).collect::<Vec<_>>(),
            c.iter().map(|p| p.token_index).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn window_is_monotone(l in 0usize..40, w in 0usize..8, extra in 1usize..40) {
            let n = l + extra;
            let small = resolve_window(l, w, n);
            let big = resolve_window(l, w + 1, n);
            prop_assert!(small.iter().all(|x| big.contains(x)));
            prop_assert!(small.len() <= 2 * w + 1);
        }

        #[test]
        fn scale_is_linear(c in 0.01f64..100.0) {
            let t = trace(8, 3);
            let one = resolve_intervention(&spec(4, 2, 1.0), &t, 8).unwrap();
            let scaled = resolve_intervention(&spec(4, 2, c), &t, 8).unwrap();
            for (a, b) in one.iter().zip(&scaled) {
                for (x, y) in a.vector.iter().zip(&b.vector) {
                    prop_assert_eq!(x * c as f32, *y);
                }
            }
        }
    }
}
