// SPDX-License-Identifier: MIT OR Apache-2.0

//! `patchlab` command line.
//!
//! Precedence for every overridable value is flag, then environment
//! variable where one exists, then config file, then built-in default.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use patchlab_core::{batch_generate, capture, BatchItem, HookSite};
use patchlab_harness::config::{ExperimentConfig, ExperimentKind};
use patchlab_harness::context::{load_pair, select, Context};
use patchlab_harness::report::{emit, emit_run_info, records_jsonl, RunInfo, Table};
use patchlab_harness::{run, HarnessError};
use serde_json::{json, Value};
use thiserror::Error;

pub const THREADS_ENV: &str = "PATCHLAB_THREADS";
pub const SEED_ENV: &str = "PATCHLAB_SEED";

// ---------------------------------------------------------------------------
// Arguments
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "patchlab", version, about = "Activation-patching experiments on local transformer models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite-score grid over every (layer, prompt token).
    Scan(ExperimentArgs),
    /// Demographic flip ratios before and after patching.
    Flip(ExperimentArgs),
    /// Judge perplexity of patched, unpatched and distorted generations.
    Perplexity(ExperimentArgs),
    /// Risk-answer disparity between two patched demographics.
    Risk(ExperimentArgs),
    /// Rank of the correct diagnosis across arms.
    Rank(ExperimentArgs),
    /// Sample completions for one prompt.
    Generate(GenerateArgs),
    /// Dump activations of one prompt.
    Capture(CaptureArgs),
    /// Print a model's configuration and tensor directory.
    InspectModel(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML, or JSON when the name ends in .json).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed override; also read from PATCHLAB_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory override.
    #[arg(long, value_name = "DIR")]
    pub outdir: Option<PathBuf>,
    /// Worker threads; also read from PATCHLAB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Samples per arm (flip, perplexity, rank) or per note and prompt (risk).
    #[arg(short = 'n', long = "samples", value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model file used when no config is given.
    #[arg(long, value_name = "PATH", conflicts_with = "config")]
    pub model: Option<PathBuf>,
    /// Tokenizer JSON for a toy model file.
    #[arg(long, value_name = "PATH", conflicts_with = "config")]
    pub tokenizer: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// User text; wrapped in the chat template unless --raw.
    #[arg(long)]
    pub prompt: String,
    /// Encode the prompt without the chat template.
    #[arg(long)]
    pub raw: bool,
    /// Apply the config's [patch] section at its target token.
    #[arg(long)]
    pub patch: bool,
    /// Completions to sample.
    #[arg(short = 'n', long = "samples", value_name = "N", default_value_t = 1)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CaptureArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Text to encode and capture.
    #[arg(long)]
    pub prompt: String,
    /// Wrap the prompt in the chat template.
    #[arg(long)]
    pub chat: bool,
    /// Hook sites to record; all three when omitted.
    #[arg(long = "site", value_name = "SITE", value_parser = parse_site)]
    pub sites: Vec<HookSite>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn parse_site(s: &str) -> std::result::Result<HookSite, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown site {s:?}; expected mlp_out, attn_out or residual_post"))
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Harness(e) => e.exit_code(),
            CliError::Usage(_) => 1,
            CliError::Pool(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

pub fn execute(cli: &Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Scan(a) | Command::Flip(a) | Command::Perplexity(a) | Command::Risk(a) | Command::Rank(a) => &a.common,
        Command::Generate(a) => &a.common,
        Command::Capture(a) => &a.common,
        Command::InspectModel(a) => &a.common,
    };
    let env_threads = std::env::var(THREADS_ENV).ok();
    let threads = match (common.threads, &env_threads) {
        (Some(n), _) => n,
        (None, Some(s)) => s
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}: expected a thread count, got {s:?}")))?,
        (None, None) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let info = RunInfo {
        threads: pool.current_num_threads(),
        env_threads,
        env_seed: std::env::var(SEED_ENV).ok(),
    };
    log::info!("{} worker threads", info.threads);
    pool.install(|| match &cli.command {
        Command::Scan(a) => experiment(ExperimentKind::Scan, a, &info),
        Command::Flip(a) => experiment(ExperimentKind::Flip, a, &info),
        Command::Perplexity(a) => experiment(ExperimentKind::PerplexityCheck, a, &info),
        Command::Risk(a) => experiment(ExperimentKind::Risk, a, &info),
        Command::Rank(a) => experiment(ExperimentKind::Rank, a, &info),
        Command::Generate(a) => generate(a, &info),
        Command::Capture(a) => capture_cmd(a, &info),
        Command::InspectModel(a) => inspect(a, &info),
    })
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

fn seed_override(common: &Common, info: &RunInfo) -> Result<Option<u64>> {
    if common.seed.is_some() {
        return Ok(common.seed);
    }
    match &info.env_seed {
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}: expected an unsigned integer, got {s:?}"))),
        None => Ok(None),
    }
}

fn load_config(common: &Common, info: &RunInfo) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed_override(common, info)? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Config from `--config`, or a default one around `--model`.
fn config_or_model(common: &Common, model: &ModelArgs, info: &RunInfo) -> Result<ExperimentConfig> {
    match (&common.config, &model.model) {
        (Some(_), _) => load_config(common, info),
        (None, Some(m)) => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Flip, m.clone());
            cfg.model.tokenizer = model.tokenizer.clone();
            if let Some(seed) = seed_override(common, info)? {
                cfg.seed = seed;
            }
            Ok(cfg)
        }
        (None, None) => Err(CliError::Usage("either --config or --model is required".into())),
    }
}

fn outdir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common.outdir.clone().unwrap_or_else(|| cfg.output_path())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let io = |source| {
        CliError::Harness(HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn provenance(cfg: &ExperimentConfig, digest: &str) -> Value {
    json!({
        "engine_version": patchlab_core::ENGINE_VERSION,
        "harness_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "model_digest": digest,
    })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn experiment(kind: ExperimentKind, args: &ExperimentArgs, info: &RunInfo) -> Result<()> {
    let mut cfg = load_config(&args.common, info)?;
    if cfg.kind != kind {
        return Err(HarnessError::config(
            "kind",
            format!("config is for {:?} but the subcommand runs {:?}", cfg.kind.as_str(), kind.as_str()),
        )
        .into());
    }
    if let Some(n) = args.samples {
        match kind {
            ExperimentKind::Flip => cfg.flip.samples = n,
            ExperimentKind::PerplexityCheck => cfg.perplexity.samples = n,
            ExperimentKind::Risk => cfg.risk.samples = n,
            ExperimentKind::Rank => cfg.rank.samples = n,
            ExperimentKind::Scan => log::warn!("-n has no effect on scan"),
        }
        cfg.validate()?;
    }
    let dir = outdir(&args.common, &cfg);
    let ctx = Context::load(cfg)?;
    log::info!("running {} on {}", kind.as_str(), ctx.model.digest());
    let out = run(&ctx)?;
    for p in emit(&out, &dir)? {
        log::info!("wrote {}", p.display());
    }
    emit_run_info(info, &dir)?;
    println!("{}", serde_json::to_string(&out.bundle.summary).expect("summary serializes"));
    Ok(())
}

fn generate(args: &GenerateArgs, info: &RunInfo) -> Result<()> {
    let cfg = config_or_model(&args.common, &args.model, info)?;
    let dir = outdir(&args.common, &cfg);
    let patch = cfg.patch.clone();
    let ctx = Context::load(cfg)?;
    let prompt = if args.raw {
        ctx.render_bare(&args.prompt)?
    } else {
        ctx.render(&args.prompt)?
    };
    let (patches, interventions) = if args.patch {
        if patch.layer >= ctx.n_layers() {
            return Err(HarnessError::config("patch.layer", "out of range").into());
        }
        let source = ctx.source(&patch.source_prompt, patch.source_chat, &patch.source_token, patch.site)?;
        let target = select(&prompt, &patch.target_token, None, "patch.target_token")?;
        let spec = source.spec(patch.site, patch.layer, patch.window_radius, patch.scale, target);
        (source.patches(&spec, ctx.n_layers())?, vec![spec])
    } else {
        (Vec::new(), Vec::new())
    };
    if args.samples == 0 {
        return Err(CliError::Usage("-n must be at least 1".into()));
    }
    let item = BatchItem {
        prompt_id: "prompt".into(),
        prompt,
        patches,
        interventions,
    };
    let records = batch_generate(&ctx.model, &ctx.tokenizer, &[item], args.samples, &ctx.sampler)
        .map_err(HarnessError::from)?;
    for r in &records {
        println!("{}", r.completion_text);
    }
    write_file(&dir.join("records.jsonl"), &records_jsonl(&records))?;
    let report = json!({
        "kind": "generate",
        "provenance": provenance(&ctx.config, ctx.model.digest()),
        "prompt": args.prompt,
        "raw": args.raw,
        "patched": args.patch,
        "samples": args.samples,
    });
    write_file(&dir.join("report.json"), &pretty(&report))?;
    emit_run_info(info, &dir)?;
    Ok(())
}

fn capture_cmd(args: &CaptureArgs, info: &RunInfo) -> Result<()> {
    let cfg = config_or_model(&args.common, &args.model, info)?;
    let dir = outdir(&args.common, &cfg);
    let ctx = Context::load(cfg)?;
    let prompt = if args.chat {
        ctx.render(&args.prompt)?
    } else {
        ctx.render_bare(&args.prompt)?
    };
    let sites: BTreeSet<HookSite> = if args.sites.is_empty() {
        [HookSite::AttnOut, HookSite::MlpOut, HookSite::ResidualPost].into()
    } else {
        args.sites.iter().copied().collect()
    };
    let trace = capture(&ctx.model, &prompt.tokens, &sites).map_err(HarnessError::from)?;
    let mut table = Table::new(&["layer", "site", "token_index", "token", "norm", "values"]);
    for (key, v) in &trace.entries {
        let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        table.push(vec![
            key.layer.into(),
            key.site.as_str().into(),
            key.token.into(),
            ctx.tokenizer.id_to_token(prompt.tokens[key.token]).unwrap_or("").into(),
            patchlab_harness::report::num(norm),
            values.join(" ").into(),
        ]);
    }
    write_file(&dir.join("tables/activations.csv"), &table.to_csv())?;
    let report = json!({
        "kind": "capture",
        "provenance": provenance(&ctx.config, ctx.model.digest()),
        "prompt": prompt.text,
        "tokens": prompt.tokens,
        "sites": sites.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "source_prompt_hash": trace.source_prompt_hash,
        "entries": trace.len(),
    });
    write_file(&dir.join("report.json"), &pretty(&report))?;
    emit_run_info(info, &dir)?;
    println!("{} activations over {} tokens", trace.len(), prompt.tokens.len());
    Ok(())
}

fn inspect(args: &InspectArgs, info: &RunInfo) -> Result<()> {
    let cfg = config_or_model(&args.common, &args.model, info)?;
    let m = &cfg.model;
    let (model, tok) = load_pair(&cfg.resolve(&m.path), m.tokenizer.as_ref().map(|p| cfg.resolve(p)).as_deref())?;
    let tensors: Vec<Value> = model
        .tensors()
        .into_iter()
        .map(|(name, shape, _)| json!({ "name": name, "shape": shape }))
        .collect();
    let report = json!({
        "kind": "inspect_model",
        "engine_version": patchlab_core::ENGINE_VERSION,
        "model_digest": model.digest(),
        "config": model.config(),
        "tokenizer_vocab_size": tok.vocab_size(),
        "special_tokens": tok.special_tokens(),
        "tensors": tensors,
    });
    let text = pretty(&report);
    print!("{text}");
    if let Some(dir) = &args.common.outdir {
        write_file(&dir.join("report.json"), &text)?;
        emit_run_info(info, dir)?;
    }
    Ok(())
}
