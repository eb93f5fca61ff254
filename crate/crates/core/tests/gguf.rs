// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checked-in GGUF fixtures against logits computed independently with numpy
//! (`fixtures/gguf/make_fixtures.py`).

use std::collections::BTreeSet;
use std::path::PathBuf;

use patchlab_core::format::gguf::GgufFile;
use patchlab_core::format::load_model;
use patchlab_core::{forward, LoadError, MlpKind, NormKind};
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    tokens: Vec<u32>,
    vocab_size: usize,
    f32: Vec<Vec<f64>>,
    f16: Vec<Vec<f64>>,
    q4_0_tensor: String,
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/gguf")
}

fn reference() -> Reference {
    serde_json::from_slice(&std::fs::read(dir().join("reference.json")).unwrap()).unwrap()
}

fn check(file: &str, expected: &[Vec<f64>], tokens: &[u32]) {
    let m = load_model(dir().join(file)).unwrap();
    let got = forward(&m, tokens, &BTreeSet::new(), &[]).unwrap().logits;
    assert_eq!(got.len(), expected.len());
    for (p, (g, e)) in got.iter().zip(expected).enumerate() {
        for (a, b) in g.iter().zip(e) {
            assert!((*a as f64 - b).abs() <= 1e-4 * (1.0 + b.abs()), "{file} position {p}: {a} vs {b}");
        }
    }
}

#[test]
fn f32_logits_match_numpy() {
    let r = reference();
    check("tiny_f32.gguf", &r.f32, &r.tokens);
}

#[test]
fn f16_logits_match_numpy() {
    let r = reference();
    check("tiny_f16.gguf", &r.f16, &r.tokens);
}

#[test]
fn q4_0_is_rejected_by_name() {
    let r = reference();
    match load_model(dir().join("tiny_q4_0.gguf")) {
        Err(LoadError::UnsupportedDtype { tensor, dtype }) => {
            assert_eq!(tensor, r.q4_0_tensor);
            assert_eq!(dtype, "Q4_0");
        }
        other => panic!("expected UnsupportedDtype, got {other:?}"),
    }
}

#[test]
fn metadata_maps_to_config() {
    let bytes = std::fs::read(dir().join("tiny_f32.gguf")).unwrap();
    let f = GgufFile::parse(&bytes).unwrap();
    let cfg = f.config().unwrap();
    assert_eq!((cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.kv_heads(), cfg.d_ff), (2, 16, 4, 2, 24));
    assert_eq!(cfg.vocab_size, reference().vocab_size);
    assert_eq!(cfg.norm_kind, NormKind::RmsNorm);
    assert_eq!(cfg.mlp_kind, MlpKind::SwiGlu);
    assert!(cfg.rope_enabled);
}

#[test]
fn embedded_tokenizer_round_trips() {
    let bytes = std::fs::read(dir().join("tiny_f32.gguf")).unwrap();
    let tok = GgufFile::parse(&bytes).unwrap().tokenizer().unwrap();
    let r = reference();
    assert_eq!(tok.vocab_size(), r.vocab_size);
    let text = " the patient is female";
    let ids = tok.tokenize(text).unwrap();
    assert_eq!(ids, r.tokens[1..5]);
    assert_eq!(tok.detokenize(&ids).unwrap(), text);
    let odd = " zq\u{e9}";
    assert_eq!(tok.detokenize(&tok.tokenize(odd).unwrap()).unwrap(), odd);
    assert_eq!(tok.special("eos"), Some(2));
}

#[test]
fn truncated_files_fail_cleanly() {
    let bytes = std::fs::read(dir().join("tiny_f32.gguf")).unwrap();
    for cut in [0, 3, 11, 24, 200, bytes.len() / 2, bytes.len() - 1] {
        assert!(patchlab_core::format::model_from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
    }
}
