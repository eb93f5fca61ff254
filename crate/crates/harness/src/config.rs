// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration.
//!
//! Configs are TOML, or JSON when the file name ends in `.json`. Relative
//! paths resolve against the directory holding the config file. Every
//! section except `model` is optional and falls back to the defaults below.
//!
//! ```toml
//! kind = "scan"            # scan | flip | perplexity_check | risk | rank
//! seed = 0
//! output_dir = "out/scan"
//!
//! [model]
//! path = "toy.plab"
//! tokenizer = "toy_tokenizer.json"   # optional for GGUF files
//! judge = "toy.plab"                 # perplexity_check only
//!
//! [patch]
//! source_prompt = "The patient is Male"
//! source_token = "last"              # last | condition | { last_of = "..." } | { index = 3 }
//! site = "mlp_out"                   # mlp_out | attn_out | residual_post
//! layer = 1
//! window_radius = 0
//! scale = 1.0
//! target_token = "condition"
//! ```

use std::path::{Path, PathBuf};

use patchlab_core::{ChatTemplate, HookSite, SamplerConfig, Tokenizer};
use patchlab_metrics::Mode;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::notes::NoteParams;
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Scan,
    Flip,
    PerplexityCheck,
    Risk,
    Rank,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Scan => "scan",
            ExperimentKind::Flip => "flip",
            ExperimentKind::PerplexityCheck => "perplexity_check",
            ExperimentKind::Risk => "risk",
            ExperimentKind::Rank => "rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelSection,
    #[serde(default)]
    pub template: ChatTemplate,
    #[serde(default)]
    pub sampler: SamplingSection,
    /// Lexicon JSON; the bundled lexicon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub patch: PatchSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub flip: FlipSection,
    #[serde(default)]
    pub perplexity: PerplexitySection,
    #[serde(default)]
    pub risk: RiskSection,
    #[serde(default)]
    pub rank: RankSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokenizer: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_tokenizer: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub temperature: f64,
    pub max_tokens: usize,
    /// Token strings that end a completion.
    pub stop: Vec<String>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 64,
            stop: vec!["<|endoftext|>".into()],
        }
    }
}

impl SamplingSection {
    pub fn resolve(&self, tok: &Tokenizer, seed: u64) -> Result<SamplerConfig> {
        let stop_tokens = self
            .stop
            .iter()
            .map(|s| {
                tok.token_to_id(s)
                    .ok_or_else(|| HarnessError::config("sampler.stop", format!("{s:?} is not a vocabulary token")))
            })
            .collect::<Result<Vec<_>>>()?;
        let sampler = SamplerConfig {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed,
            stop_tokens,
        };
        sampler
            .validate()
            .map_err(|e| HarnessError::config("sampler", e.to_string()))?;
        Ok(sampler)
    }
}

/// How a token position is picked within a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenRule {
    /// Final token of the prompt.
    Last,
    /// Last subtoken of the condition inserted into the template.
    Condition,
    /// Last subtoken of the final occurrence of a string in the user text.
    LastOf(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSection {
    pub source_prompt: String,
    pub source_token: TokenRule,
    /// Render the source through the chat template instead of encoding it
    /// bare.
    pub source_chat: bool,
    pub site: HookSite,
    pub layer: usize,
    pub window_radius: usize,
    pub scale: f64,
    pub target_token: TokenRule,
}

impl Default for PatchSection {
    fn default() -> Self {
        Self {
            source_prompt: prompts::source_prompt("Male"),
            source_token: TokenRule::Last,
            source_chat: false,
            site: HookSite::MlpOut,
            layer: 0,
            window_radius: 0,
            scale: 1.0,
            target_token: TokenRule::Condition,
        }
    }
}

fn default_conditions() -> Vec<String> {
    prompts::DEFAULT_CONDITIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub templates: Vec<String>,
    pub conditions: Vec<String>,
    /// Text teacher-forced after the prompt; the readout is the next-token
    /// distribution at its final token.
    pub readout_prefix: String,
    /// Token strings whose probabilities are summed at the readout.
    pub variants: Vec<String>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            templates: vec![prompts::GENDER_SCAN_TEMPLATE.into()],
            conditions: default_conditions(),
            readout_prefix: "Gender:".into(),
            variants: vec![" Male".into(), "Male".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipCell {
    pub scale: f64,
    #[serde(default)]
    pub window_radius: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipSection {
    pub template: String,
    pub conditions: Vec<String>,
    pub mode: Mode,
    pub target_label: String,
    pub samples: usize,
    pub cells: Vec<FlipCell>,
}

impl Default for FlipSection {
    fn default() -> Self {
        Self {
            template: prompts::VIGNETTE_TEMPLATE.into(),
            conditions: default_conditions(),
            mode: Mode::Gender,
            target_label: "male".into(),
            samples: 200,
            cells: vec![
                FlipCell {
                    scale: 1.0,
                    window_radius: 0,
                },
                FlipCell {
                    scale: 2.0,
                    window_radius: 0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionSection {
    pub token_fraction: f64,
    pub layers: Vec<usize>,
    pub scale: f64,
    /// Capture layer for every patch; the `[patch]` layer when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_layer: Option<usize>,
    pub seed: u64,
}

impl Default for DistortionSection {
    fn default() -> Self {
        let d = patchlab_core::DistortionParams::default();
        Self {
            token_fraction: d.token_fraction,
            layers: d.layers,
            scale: d.scale,
            source_layer: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerplexitySection {
    pub template: String,
    pub conditions: Vec<String>,
    pub samples: usize,
    pub scales: Vec<f64>,
    /// Judge context placed before every scored completion.
    pub judge_prefix: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionSection>,
}

impl Default for PerplexitySection {
    fn default() -> Self {
        Self {
            template: prompts::VIGNETTE_TEMPLATE.into(),
            conditions: default_conditions(),
            samples: 20,
            scales: vec![1.0, 2.0, 4.0],
            judge_prefix: "<|endoftext|>".into(),
            distortion: Some(DistortionSection::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSet {
    Gender,
    Race,
}

impl PromptSet {
    pub fn prompts(self) -> [String; 4] {
        match self {
            PromptSet::Gender => prompts::risk_prompts_gender(),
            PromptSet::Race => prompts::risk_prompts_race(),
        }
    }
}

/// Two demographic arms patched into the same neutralized notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPair {
    pub name: String,
    pub mode: Mode,
    /// Source label for arm `u`, e.g. "Female".
    pub a: String,
    /// Source label for arm `v`.
    pub b: String,
    pub layer: usize,
    #[serde(default = "two")]
    pub scale: f64,
    #[serde(default = "residual_post")]
    pub site: HookSite,
    pub prompts: PromptSet,
}

fn two() -> f64 {
    2.0
}

fn residual_post() -> HookSite {
    HookSite::ResidualPost
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    /// Notes JSONL (`{"id", "text"}` per line); generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notes_path: Option<PathBuf>,
    pub notes: NoteParams,
    pub pairs: Vec<RiskPair>,
    /// Completions per (note, prompt, arm).
    pub samples: usize,
}

impl Default for RiskSection {
    fn default() -> Self {
        Self {
            notes_path: None,
            notes: NoteParams::default(),
            pairs: vec![
                RiskPair {
                    name: "gender".into(),
                    mode: Mode::Gender,
                    a: "Female".into(),
                    b: "Male".into(),
                    layer: 18,
                    scale: 2.0,
                    site: HookSite::ResidualPost,
                    prompts: PromptSet::Gender,
                },
                RiskPair {
                    name: "race".into(),
                    mode: Mode::Race,
                    a: "Black".into(),
                    b: "White".into(),
                    layer: 20,
                    scale: 2.0,
                    site: HookSite::ResidualPost,
                    prompts: PromptSet::Race,
                },
            ],
            samples: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmPatch {
    pub source_prompt: String,
    #[serde(default = "last_rule")]
    pub source_token: TokenRule,
    pub layer: usize,
    #[serde(default = "one_f")]
    pub scale: f64,
    #[serde(default = "mlp_out")]
    pub site: HookSite,
    #[serde(default)]
    pub window_radius: usize,
    #[serde(default = "patient_rule")]
    pub target_token: TokenRule,
}

fn last_rule() -> TokenRule {
    TokenRule::Last
}

fn patient_rule() -> TokenRule {
    TokenRule::LastOf("patient".into())
}

fn one_f() -> f64 {
    1.0
}

fn mlp_out() -> HookSite {
    HookSite::MlpOut
}

/// One arm of a rank experiment: an explicit demographic written into the
/// case, a patch into the neutral case, or the neutral case as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankArm {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<ArmPatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub template: String,
    pub case: String,
    pub correct: String,
    /// Extra names for the correct diagnosis; the lexicon's synonyms when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synonyms: Option<Vec<String>>,
    pub samples: usize,
    pub arms: Vec<RankArm>,
    /// Arm-name pairs to test against each other.
    pub compare: Vec<[String; 2]>,
}

impl Default for RankSection {
    fn default() -> Self {
        Self {
            template: prompts::DDX_TEMPLATE.into(),
            case: prompts::CASE_GENDER.into(),
            correct: "pulmonary embolism".into(),
            synonyms: None,
            samples: 200,
            arms: vec![
                RankArm {
                    name: "male".into(),
                    explicit: Some("male".into()),
                    patch: None,
                },
                RankArm {
                    name: "female".into(),
                    explicit: Some("female".into()),
                    patch: None,
                },
            ],
            compare: vec![["male".into(), "female".into()]],
        }
    }
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

impl ExperimentConfig {
    /// A config with every section at its default.
    pub fn new(kind: ExperimentKind, model: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            seed: 0,
            output_dir: default_output_dir(),
            model: ModelSection {
                path: model.into(),
                tokenizer: None,
                judge: None,
                judge_tokenizer: None,
            },
            template: ChatTemplate::default(),
            sampler: SamplingSection::default(),
            lexicon: None,
            patch: PatchSection::default(),
            scan: ScanSection::default(),
            flip: FlipSection::default(),
            perplexity: PerplexitySection::default(),
            risk: RiskSection::default(),
            rank: RankSection::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigIo {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|reason| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            reason,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `path` joined to the config directory unless absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Checks that need no model.
    pub fn validate(&self) -> Result<()> {
        check_scale("patch.scale", self.patch.scale)?;
        match self.kind {
            ExperimentKind::Scan => {
                let s = &self.scan;
                non_empty("scan.conditions", s.conditions.len())?;
                non_empty("scan.templates", s.templates.len())?;
                non_empty("scan.variants", s.variants.len())?;
                for t in &s.templates {
                    has_placeholder("scan.templates", t, prompts::CONDITION)?;
                }
            }
            ExperimentKind::Flip => {
                let f = &self.flip;
                non_empty("flip.conditions", f.conditions.len())?;
                non_empty("flip.cells", f.cells.len())?;
                non_empty("flip.samples", f.samples)?;
                has_placeholder("flip.template", &f.template, prompts::CONDITION)?;
                for c in &f.cells {
                    check_scale("flip.cells.scale", c.scale)?;
                }
            }
            ExperimentKind::PerplexityCheck => {
                let p = &self.perplexity;
                non_empty("perplexity.conditions", p.conditions.len())?;
                non_empty("perplexity.samples", p.samples)?;
                has_placeholder("perplexity.template", &p.template, prompts::CONDITION)?;
                for &c in &p.scales {
                    check_scale("perplexity.scales", c)?;
                }
                if let Some(d) = &p.distortion {
                    check_scale("perplexity.distortion.scale", d.scale)?;
                    if !(d.token_fraction > 0.0 && d.token_fraction <= 1.0) {
                        return Err(HarnessError::config(
                            "perplexity.distortion.token_fraction",
                            "must lie in (0, 1]",
                        ));
                    }
                }
            }
            ExperimentKind::Risk => {
                let r = &self.risk;
                non_empty("risk.pairs", r.pairs.len())?;
                non_empty("risk.samples", r.samples)?;
                for p in &r.pairs {
                    check_scale("risk.pairs.scale", p.scale)?;
                }
            }
            ExperimentKind::Rank => {
                let r = &self.rank;
                non_empty("rank.arms", r.arms.len())?;
                non_empty("rank.samples", r.samples)?;
                has_placeholder("rank.template", &r.template, prompts::CASE)?;
                for arm in &r.arms {
                    if arm.explicit.is_some() && arm.patch.is_some() {
                        return Err(HarnessError::config(
                            "rank.arms",
                            format!("arm {:?} sets both explicit and patch", arm.name),
                        ));
                    }
                    if let Some(p) = &arm.patch {
                        check_scale("rank.arms.patch.scale", p.scale)?;
                    }
                }
                for pair in &r.compare {
                    for name in pair {
                        if !r.arms.iter().any(|a| &a.name == name) {
                            return Err(HarnessError::config("rank.compare", format!("unknown arm {name:?}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Layer bounds for every configured patch.
    pub fn validate_layers(&self, n_layers: usize) -> Result<()> {
        let check = |field: &str, layer: usize| {
            if layer >= n_layers {
                Err(HarnessError::config(
                    field,
                    format!("layer {layer} out of range for a {n_layers}-layer model"),
                ))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::Flip | ExperimentKind::PerplexityCheck => check("patch.layer", self.patch.layer)?,
            ExperimentKind::Risk => {
                for p in &self.risk.pairs {
                    check("risk.pairs.layer", p.layer)?;
                }
            }
            ExperimentKind::Rank => {
                for a in self.rank.arms.iter().filter_map(|a| a.patch.as_ref()) {
                    check("rank.arms.patch.layer", a.layer)?;
                }
            }
            ExperimentKind::Scan => {}
        }
        if self.kind == ExperimentKind::PerplexityCheck {
            if let Some(d) = &self.perplexity.distortion {
                if let Some(l) = d.source_layer {
                    check("perplexity.distortion.source_layer", l)?;
                }
                if !d.layers.iter().any(|&l| l < n_layers) {
                    return Err(HarnessError::config(
                        "perplexity.distortion.layers",
                        format!("no configured layer exists in a {n_layers}-layer model"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_scale(field: &str, c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(HarnessError::config(field, format!("scale must be finite and positive, got {c}")))
    }
}

fn non_empty(field: &str, n: usize) -> Result<()> {
    if n == 0 {
        Err(HarnessError::config(field, "must not be empty or zero"))
    } else {
        Ok(())
    }
}

fn has_placeholder(field: &str, template: &str, placeholder: &str) -> Result<()> {
    if template.contains(placeholder) {
        Ok(())
    } else {
        Err(HarnessError::config(field, format!("template lacks the {placeholder} placeholder")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("kind = \"scan\"\n[model]\npath = \"m.plab\"\n").unwrap();
        assert_eq!(cfg.scan.conditions.len(), 6);
        assert_eq!(cfg.patch.site, HookSite::MlpOut);
        assert_eq!(cfg.sampler.temperature, 0.7);
        cfg.validate().unwrap();
    }

    #[test]
    fn token_rules_parse() {
        let text = "kind = \"flip\"\n[model]\npath = \"m\"\n[patch]\nsource_token = { last_of = \"Male\" }\ntarget_token = { index = 4 }\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.patch.source_token, TokenRule::LastOf("Male".into()));
        assert_eq!(cfg.patch.target_token, TokenRule::Index(4));
    }

    #[test]
    fn toml_and_json_agree() {
        let cfg = ExperimentConfig::new(ExperimentKind::Risk, "toy.plab");
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Flip, "m");
        cfg.flip.cells[0].scale = -1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("flip.cells.scale"), "{err}");

        let mut cfg = ExperimentConfig::new(ExperimentKind::Scan, "m");
        cfg.scan.templates = vec!["no placeholder".into()];
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);

        let cfg = ExperimentConfig::new(ExperimentKind::Risk, "m");
        assert!(cfg.validate_layers(4).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"scan\"\nbogus = 1\n[model]\npath = \"m\"\n").is_err());
    }
}
