// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
        .display()
        .to_string()
}

fn patchlab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_patchlab"));
    c.args(args).env_remove("PATCHLAB_SEED").env_remove("PATCHLAB_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand_and_flag() {
    let top = String::from_utf8(patchlab(&["--help"], &[]).stdout).unwrap();
    for sub in ["scan", "flip", "perplexity", "risk", "rank", "generate", "capture", "inspect-model"] {
        assert!(top.contains(sub), "{sub} missing from help");
    }
    let flip = String::from_utf8(patchlab(&["flip", "--help"], &[]).stdout).unwrap();
    for flag in ["--config", "--seed", "--outdir", "--threads", "--samples", "-n", "--verbose", "--quiet"] {
        assert!(flip.contains(flag), "{flag} missing from flip help");
    }
    let generate = String::from_utf8(patchlab(&["generate", "--help"], &[]).stdout).unwrap();
    for flag in ["--prompt", "--raw", "--patch", "--model", "--tokenizer"] {
        assert!(generate.contains(flag), "{flag} missing from generate help");
    }
    let capture = String::from_utf8(patchlab(&["capture", "--help"], &[]).stdout).unwrap();
    assert!(capture.contains("--site") && capture.contains("--chat"));
}

#[test]
fn missing_config_is_exit_one_naming_the_path() {
    let o = patchlab(&["scan", "--config", "/nonexistent/scan.toml"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/scan.toml"));
}

#[test]
fn usage_errors_are_exit_one() {
    assert_eq!(patchlab(&[], &[]).status.code(), Some(1));
    assert_eq!(patchlab(&["scan", "--seed", "x"], &[]).status.code(), Some(1));
    assert_eq!(patchlab(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(patchlab(&["--help"], &[]).status.code(), Some(0));
    let bad_env = patchlab(&["scan", "--config", &fixture("configs/scan.toml")], &[("PATCHLAB_THREADS", "many")]);
    assert_eq!(bad_env.status.code(), Some(1));
    assert!(stderr(&bad_env).contains("PATCHLAB_THREADS"));
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = format!(
        "kind = \"flip\"\n[model]\npath = \"{}\"\ntokenizer = \"{}\"\n[patch]\nlayer = 9\n",
        fixture("toy.plab"),
        fixture("toy_tokenizer.json")
    );
    std::fs::write(&cfg, text).unwrap();
    let o = patchlab(&["flip", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("patch.layer"), "{}", stderr(&o));
}

#[test]
fn model_errors_are_exit_two() {
    let o = patchlab(&["inspect-model", "--model", &fixture("gguf/tiny_q4_0.gguf")], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Q4_0"));
    let o = patchlab(&["inspect-model", "--model", &fixture("texts/notes.jsonl")], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toy_model_without_tokenizer_is_a_config_error() {
    let o = patchlab(&["inspect-model", "--model", &fixture("toy.plab")], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tokenizer"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_are_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let long = "patient ".repeat(2000);
    let o = patchlab(
        &[
            "generate",
            "--model",
            &fixture("toy.plab"),
            "--tokenizer",
            &fixture("toy_tokenizer.json"),
            "--prompt",
            &long,
            "--outdir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn scan_smoke_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan");
    let o = patchlab(&["scan", "--config", &fixture("configs/scan.toml"), "--outdir", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["grid.svg", "report.json", "records.jsonl", "run.json", "tables/grid.csv", "tables/scan_prompts.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn seed_precedence_flag_over_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let seed_of = |name: &str, args: &[&str], env: &[(&str, &str)]| {
        let out = dir.path().join(name);
        let (cfg, o) = (fixture("configs/rank.toml"), out.display().to_string());
        let mut full = vec!["rank", "--config", &cfg, "-n", "2", "--outdir", &o];
        full.extend(args);
        let r = patchlab(&full, env);
        assert!(r.status.success(), "{}", stderr(&r));
        let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        let info: Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
        (report["provenance"]["seed"].as_u64().unwrap(), info)
    };
    assert_eq!(seed_of("file", &[], &[]).0, 0);
    let (s, info) = seed_of("env", &[], &[("PATCHLAB_SEED", "41")]);
    assert_eq!(s, 41);
    assert_eq!(info["env_seed"], "41");
    assert_eq!(seed_of("flag", &["--seed", "5"], &[("PATCHLAB_SEED", "41")]).0, 5);
    let (_, info) = seed_of("threads", &["--threads", "3"], &[("PATCHLAB_THREADS", "2")]);
    assert_eq!(info["threads"], 3);
    assert_eq!(info["env_threads"], "2");
}

#[test]
fn json_config_is_equivalent() {
    let toml_cfg = patchlab_harness::ExperimentConfig::load(fixture("configs/rank.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut value = serde_json::to_value(&toml_cfg).unwrap();
    value["model"]["path"] = fixture("toy.plab").into();
    value["model"]["tokenizer"] = fixture("toy_tokenizer.json").into();
    let json_path = dir.path().join("rank.json");
    std::fs::write(&json_path, serde_json::to_string(&value).unwrap()).unwrap();

    let run = |cfg: &str, out: &str| {
        let out = dir.path().join(out);
        let o = patchlab(&["rank", "--config", cfg, "-n", "3", "--outdir", out.to_str().unwrap()], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("tables/ranks.csv")).unwrap()
    };
    assert_eq!(run(&fixture("configs/rank.toml"), "t"), run(json_path.to_str().unwrap(), "j"));
}

#[test]
fn samples_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let o = patchlab(
        &["flip", "--config", &fixture("configs/flip_race.toml"), "-n", "3", "--outdir", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3 * 3);
}
