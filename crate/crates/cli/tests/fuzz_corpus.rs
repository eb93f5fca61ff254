// SPDX-License-Identifier: MIT OR Apache-2.0

//! Replays the checked-in fuzz corpus through the same entry points the
//! fuzz targets drive, so regressions show up under plain `cargo test`.

use std::path::PathBuf;

use patchlab_core::format::{gguf, toy};
use patchlab_core::{InterventionSpec, Tokenizer};
use patchlab_harness::ExperimentConfig;
use patchlab_metrics::{
    classify_demographic, neutralize_gender, parse_list_items, parse_risk_answer, rank_of_diagnosis,
    relaxed_assignment, strict_assignment, Lexicon, Mode,
};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text_seeds(target: &str) -> Vec<(String, String)> {
    seeds(target)
        .into_iter()
        .filter_map(|(n, b)| String::from_utf8(b).ok().map(|s| (n, s)))
        .collect()
}

#[test]
fn toy_format() {
    let mut loaded = 0;
    for (name, data) in seeds("toy_format") {
        let _ = toy::parse_header(&data);
        if let Ok(m) = toy::from_bytes(&data) {
            assert_eq!(toy::from_bytes(&toy::to_bytes(&m)).unwrap().config(), m.config(), "{name}");
            loaded += 1;
        }
    }
    assert!(loaded >= 2);
}

#[test]
fn gguf() {
    for (_, data) in seeds("gguf") {
        if let Ok(f) = gguf::GgufFile::parse(&data) {
            let _ = f.config();
            let _ = f.tokenizer();
        }
        let _ = gguf::from_bytes(&data);
    }
}

#[test]
fn tokenizer_json() {
    for (name, data) in seeds("tokenizer_json") {
        let tok = Tokenizer::from_json(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        if let Ok(ids) = tok.tokenize("The patient is Male") {
            let _ = tok.detokenize(&ids);
        }
    }
}

#[test]
fn tokenize_text() {
    let tok = patchlab_harness::toy::toy_tokenizer();
    for (name, text) in text_seeds("tokenize_text") {
        if let Ok(spans) = tok.tokenize_with_offsets(&text) {
            let ids: Vec<u32> = spans.iter().map(|s| s.id).collect();
            assert_eq!(tok.detokenize(&ids).unwrap(), text, "{name}");
        }
    }
}

#[test]
fn intervention_json() {
    for (_, text) in text_seeds("intervention_json") {
        if let Ok(spec) = InterventionSpec::from_json(&text) {
            assert_eq!(InterventionSpec::from_json(&spec.to_json()).unwrap(), spec);
            let _ = spec.validate(32);
        }
    }
}

#[test]
fn experiment_config() {
    let mut parsed = 0;
    for (_, text) in text_seeds("experiment_config") {
        for cfg in [ExperimentConfig::from_toml(&text), ExperimentConfig::from_json(&text)].into_iter().flatten() {
            let _ = cfg.validate();
            let _ = cfg.validate_layers(4);
            parsed += 1;
        }
    }
    assert!(parsed >= 8);
}

#[test]
fn lexicon_json() {
    for (name, text) in text_seeds("lexicon_json") {
        let lex = Lexicon::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let sample = "Gender: Female. He is a 40 year old man; Race: Black.";
        let _ = classify_demographic(sample, &lex, Mode::Gender);
        let _ = classify_demographic(sample, &lex, Mode::Race);
        let _ = neutralize_gender(sample, &lex.neutralize);
    }
}

#[test]
fn completion_text() {
    let lex = Lexicon::default();
    for (name, text) in text_seeds("completion_text") {
        let _ = classify_demographic(&text, &lex, Mode::Gender);
        let _ = classify_demographic(&text, &lex, Mode::Race);
        let _ = parse_risk_answer(&text, &lex);
        let _ = parse_list_items(&text);
        let _ = rank_of_diagnosis(&text, "pulmonary embolism", &["PE"]);
        if let Ok(true) = strict_assignment(&text, "male", "female", &lex) {
            assert!(relaxed_assignment(&text, "female", &lex).unwrap(), "{name}");
        }
        let n = neutralize_gender(&text, &lex.neutralize);
        assert_eq!(neutralize_gender(&n.text, &lex.neutralize).replacements, 0, "{name}");
    }
}
