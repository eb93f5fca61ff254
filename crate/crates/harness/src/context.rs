// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loaded resources and prompt plumbing shared by the runners.

use std::collections::BTreeSet;
use std::path::Path;

use patchlab_core::format::{self, gguf::GgufFile};
use patchlab_core::{
    capture, resolve_intervention, ActivationTrace, HookSite, InterventionSpec, RenderedPrompt, ResolvedPatch,
    SamplerConfig, Tokenizer, TransformerModel,
};
use patchlab_metrics::Lexicon;

use crate::config::{ExperimentConfig, TokenRule};
use crate::error::{HarnessError, Result};
use crate::prompts;

/// Version stamp of persisted interventions.
pub const INTERVENTION_SCHEMA_VERSION: u32 = 1;

pub struct Context {
    pub config: ExperimentConfig,
    pub model: TransformerModel,
    pub tokenizer: Tokenizer,
    pub judge: Option<(TransformerModel, Tokenizer)>,
    pub lexicon: Lexicon,
    pub sampler: SamplerConfig,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::Model {
        path: path.to_path_buf(),
        source: patchlab_core::LoadError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        },
    })
}

/// Load a model and its tokenizer. GGUF files may carry their own
/// tokenizer; toy models need an explicit tokenizer file.
pub fn load_pair(model: &Path, tokenizer: Option<&Path>) -> Result<(TransformerModel, Tokenizer)> {
    let bytes = read(model)?;
    let m = format::model_from_bytes(&bytes).map_err(|source| HarnessError::Model {
        path: model.to_path_buf(),
        source,
    })?;
    let tok = match tokenizer {
        Some(p) => Tokenizer::load(p).map_err(|source| HarnessError::Tokenizer {
            path: p.to_path_buf(),
            source,
        })?,
        None if bytes.starts_with(b"GGUF") => GgufFile::parse(&bytes)
            .and_then(|f| f.tokenizer())
            .map_err(|source| HarnessError::Model {
                path: model.to_path_buf(),
                source,
            })?,
        None => {
            return Err(HarnessError::config(
                "model.tokenizer",
                format!("{} has no embedded tokenizer", model.display()),
            ))
        }
    };
    if tok.vocab_size() > m.config().vocab_size {
        return Err(HarnessError::config(
            "model.tokenizer",
            format!(
                "tokenizer has {} entries but the model vocabulary is {}",
                tok.vocab_size(),
                m.config().vocab_size
            ),
        ));
    }
    Ok((m, tok))
}

impl Context {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let (model, tokenizer) = load_pair(
            &config.resolve(&m.path),
            m.tokenizer.as_ref().map(|p| config.resolve(p)).as_deref(),
        )?;
        let judge = match &m.judge {
            Some(j) => {
                let jt = m.judge_tokenizer.as_ref().or(m.tokenizer.as_ref()).map(|p| config.resolve(p));
                Some(load_pair(&config.resolve(j), jt.as_deref())?)
            }
            None => None,
        };
        let lexicon = match &config.lexicon {
            Some(p) => Lexicon::load(config.resolve(p))
                .map_err(|e| HarnessError::config("lexicon", e.to_string()))?,
            None => Lexicon::default(),
        };
        Self::new(config, model, tokenizer, judge, lexicon)
    }

    /// Assemble from already-loaded parts.
    pub fn new(
        config: ExperimentConfig,
        model: TransformerModel,
        tokenizer: Tokenizer,
        judge: Option<(TransformerModel, Tokenizer)>,
        lexicon: Lexicon,
    ) -> Result<Self> {
        config.validate()?;
        config.validate_layers(model.config().n_layers)?;
        config
            .template
            .validate(&tokenizer)
            .map_err(|e| HarnessError::config("template", e.to_string()))?;
        let sampler = config.sampler.resolve(&tokenizer, config.seed)?;
        Ok(Self {
            config,
            model,
            tokenizer,
            judge,
            lexicon,
            sampler,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.model.config().n_layers
    }

    pub fn render(&self, user_text: &str) -> Result<RenderedPrompt> {
        Ok(self.config.template.render(&self.tokenizer, user_text)?)
    }

    /// Encode `text` bare, as a prompt whose user span is all of it.
    pub fn render_bare(&self, text: &str) -> Result<RenderedPrompt> {
        Ok(RenderedPrompt::bare(&self.tokenizer, text)?)
    }

    /// A source prompt with its capture over every layer of `site`.
    pub fn source(&self, prompt: &str, chat: bool, rule: &TokenRule, site: HookSite) -> Result<Source> {
        let rendered = if chat { self.render(prompt)? } else { self.render_bare(prompt)? };
        let index = select(&rendered, rule, None, "source_token")?;
        let trace = capture(&self.model, &rendered.tokens, &BTreeSet::from([site]))?;
        Ok(Source {
            prompt: prompt.to_string(),
            index,
            trace,
        })
    }
}

/// Position picked by `rule`. `condition` is the text substituted for the
/// placeholder, if any.
pub fn select(prompt: &RenderedPrompt, rule: &TokenRule, condition: Option<&str>, field: &str) -> Result<usize> {
    let missing = |what: &str| HarnessError::config(field, format!("{what} not found in prompt"));
    if prompt.tokens.is_empty() {
        return Err(HarnessError::config(field, "prompt is empty"));
    }
    match rule {
        TokenRule::Last => Ok(prompt.last_index()),
        TokenRule::Index(i) if *i < prompt.tokens.len() => Ok(*i),
        TokenRule::Index(i) => Err(HarnessError::config(
            field,
            format!("index {i} beyond prompt of {} tokens", prompt.tokens.len()),
        )),
        TokenRule::Condition => {
            let c = condition.ok_or_else(|| HarnessError::config(field, "no condition in this experiment"))?;
            prompt.last_token_of(c, 0).ok_or_else(|| missing(c))
        }
        TokenRule::LastOf(needle) => {
            let user = &prompt.text[prompt.user_span.clone()];
            let n = user.matches(needle.as_str()).count();
            if n == 0 {
                return Err(missing(needle));
            }
            prompt.last_token_of(needle, n - 1).ok_or_else(|| missing(needle))
        }
    }
}

/// A captured source prompt.
pub struct Source {
    pub prompt: String,
    pub index: usize,
    pub trace: ActivationTrace,
}

impl Source {
    pub fn spec(&self, site: HookSite, layer: usize, window_radius: usize, scale: f64, target: usize) -> InterventionSpec {
        InterventionSpec {
            schema_version: INTERVENTION_SCHEMA_VERSION,
            source_prompt: self.prompt.clone(),
            source_token_index: self.index,
            site,
            target_token_index: target,
            layer,
            window_radius,
            scale,
        }
    }

    pub fn patches(&self, spec: &InterventionSpec, n_layers: usize) -> Result<Vec<ResolvedPatch>> {
        Ok(resolve_intervention(spec, &self.trace, n_layers)?)
    }
}

/// Fill a `[CONDITION]` template.
pub fn condition_prompt(template: &str, condition: &str) -> String {
    prompts::fill(template, prompts::CONDITION, condition)
}

/// Token ids of `variants` that are single tokens; multi-token variants
/// cannot be read from one next-token distribution and are skipped.
pub fn variant_ids(tok: &Tokenizer, variants: &[String]) -> Result<Vec<u32>> {
    let mut ids: Vec<u32> = variants
        .iter()
        .filter_map(|v| match tok.tokenize(v) {
            Ok(t) if t.len() == 1 => Some(Ok(t[0])),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(patchlab_core::EngineError::from)?;
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(HarnessError::config("scan.variants", "no variant is a single token"));
    }
    Ok(ids)
}
