// SPDX-License-Identifier: MIT OR Apache-2.0

//! Engine behaviour against a naive whole-sequence reference written here
//! in f64, plus structural properties of patching and generation.

use std::collections::{BTreeSet, HashMap};

use patchlab_core::{
    batch_generate, capture, forward, generate, BatchItem, CounterRng, ForwardOptions, HookSite,
    MlpKind, ModelConfig, NormKind, RenderedPrompt, ResolvedPatch, SamplerConfig, Session,
    TransformerModel,
};
use proptest::prelude::*;

type Tensors = HashMap<String, (Vec<usize>, Vec<f32>)>;

const SITES: [HookSite; 3] = [HookSite::AttnOut, HookSite::MlpOut, HookSite::ResidualPost];

fn config(norm: NormKind, mlp: MlpKind, rope: bool, kv: Option<usize>) -> ModelConfig {
    ModelConfig {
        n_layers: 3,
        d_model: 16,
        n_heads: 4,
        n_kv_heads: kv,
        d_ff: 20,
        vocab_size: 17,
        max_seq_len: 24,
        norm_kind: norm,
        norm_eps: 1e-5,
        rope_enabled: rope,
        rope_theta: 10_000.0,
        mlp_kind: mlp,
    }
}

fn random_tensors(cfg: &ModelConfig, seed: u64) -> Tensors {
    let mut rng = CounterRng::new(seed);
    cfg.tensor_layout()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let norm = name.contains("norm");
            let data = (0..n)
                .map(|_| {
                    let u = rng.next_f64() as f32 * 2.0 - 1.0;
                    if norm && name.ends_with("weight") {
                        1.0 + 0.3 * u
                    } else if norm {
                        0.1 * u
                    } else {
                        0.6 * u
                    }
                })
                .collect();
            (name, (shape, data))
        })
        .collect()
}

fn all_configs() -> Vec<ModelConfig> {
    vec![
        config(NormKind::RmsNorm, MlpKind::Gelu, false, None),
        config(NormKind::LayerNorm, MlpKind::Gelu, false, None),
        config(NormKind::RmsNorm, MlpKind::SwiGlu, true, Some(2)),
        config(NormKind::LayerNorm, MlpKind::SwiGlu, true, None),
    ]
}

fn model(cfg: &ModelConfig, seed: u64) -> TransformerModel {
    TransformerModel::from_tensors(cfg.clone(), random_tensors(cfg, seed), format!("random-{seed}")).unwrap()
}

// ---------------------------------------------------------------------------
// Reference implementation
// ---------------------------------------------------------------------------

struct Reference<'a> {
    cfg: &'a ModelConfig,
    t: &'a Tensors,
}

impl Reference<'_> {
    fn w(&self, name: &str) -> Vec<f64> {
        self.t[name].1.iter().map(|&x| x as f64).collect()
    }

    fn matvec(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let (shape, data) = &self.t[name];
        (0..shape[0])
            .map(|r| (0..shape[1]).map(|c| data[r * shape[1] + c] as f64 * x[c]).sum())
            .collect()
    }

    fn norm(&self, prefix: &str, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let eps = self.cfg.norm_eps as f64;
        let w = self.w(&format!("{prefix}.weight"));
        match self.cfg.norm_kind {
            NormKind::RmsNorm => {
                let r = (x.iter().map(|v| v * v).sum::<f64>() / n + eps).sqrt();
                x.iter().zip(&w).map(|(v, g)| v / r * g).collect()
            }
            NormKind::LayerNorm => {
                let b = self.w(&format!("{prefix}.bias"));
                let m = x.iter().sum::<f64>() / n;
                let s = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n + eps).sqrt();
                x.iter().zip(w.iter().zip(&b)).map(|(v, (g, bb))| (v - m) / s * g + bb).collect()
            }
        }
    }

    fn rope(&self, v: &mut [f64], pos: usize) {
        let dh = self.cfg.d_model / self.cfg.n_heads;
        for head in v.chunks_mut(dh) {
            for i in 0..dh / 2 {
                let f = (self.cfg.rope_theta as f64).powf(-2.0 * i as f64 / dh as f64);
                let (s, c) = (pos as f64 * f).sin_cos();
                let (a, b) = (head[2 * i], head[2 * i + 1]);
                head[2 * i] = a * c - b * s;
                head[2 * i + 1] = a * s + b * c;
            }
        }
    }

    fn run(&self, tokens: &[u32], patches: &[ResolvedPatch]) -> Vec<Vec<f64>> {
        let cfg = self.cfg;
        let d = cfg.d_model;
        let dh = d / cfg.n_heads;
        let kvh = cfg.n_kv_heads.unwrap_or(cfg.n_heads);
        let group = cfg.n_heads / kvh;
        let tok = self.w("tok_embed");
        let mut xs: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(p, &t)| {
                let mut x = tok[t as usize * d..(t as usize + 1) * d].to_vec();
                if !cfg.rope_enabled {
                    let pe = self.w("pos_embed");
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi += pe[p * d + i];
                    }
                }
                x
            })
            .collect();
        let apply = |l: usize, site: HookSite, p: usize, v: &mut Vec<f64>| {
            if let Some(r) = patches.iter().find(|r| r.layer == l && r.site == site && r.token_index == p) {
                *v = r.vector.iter().map(|&x| x as f64).collect();
            }
        };
        for l in 0..cfg.n_layers {
            let pre = format!("layers.{l}");
            let h: Vec<Vec<f64>> = xs.iter().map(|x| self.norm(&format!("{pre}.attn_norm"), x)).collect();
            let mut q: Vec<Vec<f64>> = h.iter().map(|x| self.matvec(&format!("{pre}.attn.q"), x)).collect();
            let mut k: Vec<Vec<f64>> = h.iter().map(|x| self.matvec(&format!("{pre}.attn.k"), x)).collect();
            let v: Vec<Vec<f64>> = h.iter().map(|x| self.matvec(&format!("{pre}.attn.v"), x)).collect();
            if cfg.rope_enabled {
                for p in 0..xs.len() {
                    self.rope(&mut q[p], p);
                    self.rope(&mut k[p], p);
                }
            }
            for p in 0..xs.len() {
                let mut heads = vec![0.0; d];
                for hd in 0..cfg.n_heads {
                    let g = hd / group;
                    let qh = &q[p][hd * dh..(hd + 1) * dh];
                    let scores: Vec<f64> = (0..=p)
                        .map(|t| qh.iter().zip(&k[t][g * dh..(g + 1) * dh]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                        .collect();
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for t in 0..=p {
                        for i in 0..dh {
                            heads[hd * dh + i] += e[t] / z * v[t][g * dh + i];
                        }
                    }
                }
                let mut a = self.matvec(&format!("{pre}.attn.o"), &heads);
                apply(l, HookSite::AttnOut, p, &mut a);
                for i in 0..d {
                    xs[p][i] += a[i];
                }
            }
            for p in 0..xs.len() {
                let h = self.norm(&format!("{pre}.mlp_norm"), &xs[p]);
                let up = self.matvec(&format!("{pre}.mlp.up"), &h);
                let act: Vec<f64> = match cfg.mlp_kind {
                    MlpKind::Gelu => up
                        .iter()
                        .map(|&u| 0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh()))
                        .collect(),
                    MlpKind::SwiGlu => {
                        let g = self.matvec(&format!("{pre}.mlp.gate"), &h);
                        g.iter().zip(&up).map(|(g, u)| g / (1.0 + (-g).exp()) * u).collect()
                    }
                };
                let mut m = self.matvec(&format!("{pre}.mlp.down"), &act);
                apply(l, HookSite::MlpOut, p, &mut m);
                for i in 0..d {
                    xs[p][i] += m[i];
                }
                let mut x = xs[p].clone();
                apply(l, HookSite::ResidualPost, p, &mut x);
                xs[p] = x;
            }
        }
        xs.iter().map(|x| self.matvec("unembed", &self.norm("final_norm", x))).collect()
    }
}

fn assert_close(a: &[Vec<f32>], b: &[Vec<f64>], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (p, (ra, rb)) in a.iter().zip(b).enumerate() {
        for (x, y) in ra.iter().zip(rb) {
            assert!((*x as f64 - y).abs() <= tol * (1.0 + y.abs()), "position {p}: {x} vs {y}");
        }
    }
}

fn tokens(seed: u64, n: usize, vocab: usize) -> Vec<u32> {
    let mut rng = CounterRng::new(seed);
    (0..n).map(|_| rng.below(vocab as u64) as u32).collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[test]
fn logits_match_reference() {
    for (i, cfg) in all_configs().iter().enumerate() {
        let t = random_tensors(cfg, 100 + i as u64);
        let m = TransformerModel::from_tensors(cfg.clone(), t.clone(), String::new()).unwrap();
        let ids = tokens(i as u64, 11, cfg.vocab_size);
        let ours = forward(&m, &ids, &BTreeSet::new(), &[]).unwrap();
        assert_close(&ours.logits, &Reference { cfg, t: &t }.run(&ids, &[]), 1e-4);
    }
}

#[test]
fn patched_logits_match_reference() {
    let cfg = &all_configs()[2];
    let t = random_tensors(cfg, 7);
    let m = TransformerModel::from_tensors(cfg.clone(), t.clone(), String::new()).unwrap();
    let ids = tokens(3, 9, cfg.vocab_size);
    let mut rng = CounterRng::new(99);
    for (l, site) in [(0, HookSite::AttnOut), (1, HookSite::MlpOut), (2, HookSite::ResidualPost)] {
        let vector: Vec<f32> = (0..cfg.d_model).map(|_| rng.next_f64() as f32 * 4.0 - 2.0).collect();
        let patch = vec![ResolvedPatch { layer: l, site, token_index: 4, vector }];
        let ours = forward(&m, &ids, &BTreeSet::new(), &patch).unwrap();
        assert_close(&ours.logits, &Reference { cfg, t: &t }.run(&ids, &patch), 1e-4);
    }
}

#[test]
fn incremental_steps_match_prefill() {
    for cfg in all_configs() {
        let m = model(&cfg, 5);
        let ids = tokens(8, 10, cfg.vocab_size);
        let full = forward(&m, &ids, &BTreeSet::new(), &[]).unwrap();
        let mut s = Session::new(&m);
        let first = s.prefill(&ids[..3], &ForwardOptions::default()).unwrap();
        assert_eq!(first.logits[..], full.logits[..3]);
        for (p, &t) in ids.iter().enumerate().skip(3) {
            assert_eq!(s.step(t).unwrap(), full.logits[p]);
        }
    }
}

#[test]
fn attention_rows_are_causal_distributions() {
    let cfg = &all_configs()[0];
    let m = model(cfg, 1);
    let ids = tokens(2, 8, cfg.vocab_size);
    let r = Session::new(&m)
        .prefill(
            &ids,
            &ForwardOptions {
                record_attention: true,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(r.attention.len(), cfg.n_layers * cfg.n_heads * ids.len());
    for row in &r.attention {
        assert_eq!(row.weights.len(), row.position + 1);
        let sum: f32 = row.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5 && row.weights.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn self_patch_is_identity_everywhere() {
    for cfg in all_configs() {
        let m = model(&cfg, 11);
        let ids = tokens(4, 7, cfg.vocab_size);
        let sites: BTreeSet<HookSite> = SITES.into();
        let base = capture(&m, &ids, &sites).unwrap();
        let clean = forward(&m, &ids, &BTreeSet::new(), &[]).unwrap();
        for l in 0..cfg.n_layers {
            for site in SITES {
                for p in 0..ids.len() {
                    let vector = base.get(l, site, p).unwrap().to_vec();
                    let r = forward(&m, &ids, &BTreeSet::new(), &[ResolvedPatch { layer: l, site, token_index: p, vector }]).unwrap();
                    assert_eq!(r.logits, clean.logits, "layer {l} {site:?} position {p}");
                }
            }
        }
    }
}

#[test]
fn capture_records_the_patched_value() {
    let cfg = &all_configs()[1];
    let m = model(cfg, 2);
    let ids = tokens(6, 5, cfg.vocab_size);
    let vector = vec![0.25; cfg.d_model];
    let patch = ResolvedPatch { layer: 1, site: HookSite::MlpOut, token_index: 2, vector: vector.clone() };
    let r = forward(&m, &ids, &[HookSite::MlpOut].into(), &[patch]).unwrap();
    assert_eq!(r.trace.get(1, HookSite::MlpOut, 2).unwrap(), &vector[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn earlier_positions_ignore_later_tokens(
        ids in prop::collection::vec(0u32..17, 2..12),
        cut in 1usize..11,
        replacement in 0u32..17,
    ) {
        let cfg = &all_configs()[2];
        let m = model(cfg, 21);
        let cut = cut.min(ids.len() - 1);
        let mut other = ids.clone();
        other[cut] = replacement;
        let a = forward(&m, &ids, &BTreeSet::new(), &[]).unwrap();
        let b = forward(&m, &other, &BTreeSet::new(), &[]).unwrap();
        prop_assert_eq!(&a.logits[..cut], &b.logits[..cut]);
    }

    #[test]
    fn patches_never_reach_backwards(
        ids in prop::collection::vec(0u32..17, 2..10),
        target in 0usize..10,
        layer in 0usize..3,
        site_ix in 0usize..3,
        fill in -3.0f32..3.0,
    ) {
        let cfg = &all_configs()[0];
        let m = model(cfg, 22);
        let target = target.min(ids.len() - 1);
        let patch = ResolvedPatch { layer, site: SITES[site_ix], token_index: target, vector: vec![fill; cfg.d_model] };
        let a = forward(&m, &ids, &BTreeSet::new(), &[]).unwrap();
        let b = forward(&m, &ids, &BTreeSet::new(), &[patch]).unwrap();
        prop_assert_eq!(&a.logits[..target], &b.logits[..target]);
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

fn word_tokenizer(n: usize) -> patchlab_core::Tokenizer {
    let mut file = patchlab_core::TokenizerFile::default();
    file.vocab.insert("<eos>".into(), 0);
    for i in 1..n {
        file.vocab.insert(char::from(b'a' + i as u8 - 1).to_string(), i as u32);
    }
    file.special_tokens.insert("<eos>".into(), 0);
    patchlab_core::Tokenizer::from_file(file).unwrap()
}

#[test]
fn generation_is_seed_deterministic_and_thread_invariant() {
    let cfg = &all_configs()[3];
    let m = model(cfg, 31);
    let tok = word_tokenizer(cfg.vocab_size);
    let sampler = SamplerConfig { temperature: 1.0, max_tokens: 10, seed: 40, stop_tokens: vec![0] };
    let prompt = tokens(1, 4, cfg.vocab_size);
    let a = generate(&m, &tok, &prompt, &[], &sampler, 3).unwrap();
    assert_eq!(a, generate(&m, &tok, &prompt, &[], &sampler, 3).unwrap());

    let items: Vec<BatchItem> = (0..3)
        .map(|i| BatchItem {
            prompt_id: format!("p{i}"),
            prompt: RenderedPrompt::bare(&tok, &tok.detokenize(&tokens(i, 5, cfg.vocab_size)).unwrap()).unwrap(),
            patches: Vec::new(),
            interventions: Vec::new(),
        })
        .collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| batch_generate(&m, &tok, &items, 4, &sampler).unwrap())
    };
    let (one, many) = (run(1), run(4));
    assert_eq!(one, many);
    let seeds: Vec<u64> = one.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, (40..52).collect::<Vec<u64>>());
}
