// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-wired four-layer toy model with planted demographic circuits.
//!
//! The residual stream is a set of named features. Every token embedding
//! carries `ONE = 8`, so RMS normalization maps a clean stream to roughly
//! its raw values and `ONE` doubles as a bias input.
//!
//! ```text
//! layer 0  no-op
//! layer 1  MLP:  G  = GPRIOR            (planted gender layer)
//!                R += RPRIOR / 2        (race, first half)
//!                ABN = demographic features already oversized
//! layer 2  MLP:  R += RPRIOR / 2        (race, second half)
//!          attn: STARTED, HAS2, HAS_PNEU, HAS_PUL presence heads
//! layer 3  attn: GR <- G over condition/demographic tokens
//!                RR <- R over condition/race tokens
//!                TR, TD <- task flags;  AVGA <- mean of ABN
//!          MLP:  yes/no split, gated readouts, chaos detector
//! unembed  bigram grammar from per-token state features plus readouts
//!          of GR, RR and the gate outputs
//! ```
//!
//! The vignette grammar is `Gender: <Male|Female>; Race: <race>.`, the risk
//! answer prefixes it with `Yes.` or `No.`, and the differential list is
//! `1. <item>\n2. <item>`. When many positions carry oversized demographic
//! features on entry to layer 1, high-entropy word output switches on.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use patchlab_core::format::toy as toy_format;
use patchlab_core::{
    CounterRng, MlpKind, ModelConfig, NormKind, TokenEncoding, Tokenizer, TokenizerFile,
    TransformerModel,
};
use patchlab_metrics::{neutralize_gender, Lexicon};

use crate::notes;
use crate::prompts;

/// Layer whose MLP writes the gender feature.
pub const PLANTED_GENDER_LAYER: usize = 1;
/// Layers whose MLPs each write half of the race feature.
pub const PLANTED_RACE_LAYERS: [usize; 2] = [1, 2];

pub const EOS: &str = "<|endoftext|>";
pub const USER: &str = "<|user|>";
pub const ASSISTANT: &str = "<|assistant|>";

const D: usize = 64;
const N_LAYERS: usize = 4;
const N_HEADS: usize = 4;
const DH: usize = D / N_HEADS;
const D_FF: usize = 16;
const MAX_SEQ: usize = 1024;

// ---------------------------------------------------------------------------
// Residual features
// ---------------------------------------------------------------------------

const ONE: usize = 0;
const GPRIOR: usize = 1;
const RPX: usize = 2;
const RPY: usize = 3;
const COND: usize = 4;
const GDEMO: usize = 5;
const RDEMO: usize = 6;
const RISK: usize = 7;
const DDX: usize = 8;
const SINK: usize = 9;
const FIRST: usize = 10;
const TWO: usize = 11;
const PNEU: usize = 12;
const PUL: usize = 13;
const S_GF: usize = 14;
const S_GV: usize = 15;
const S_SEMI: usize = 16;
const S_RF: usize = 17;
const S_RV: usize = 18;
const S_DOT: usize = 19;
const S_YN: usize = 20;
const S_NUM1: usize = 21;
const S_NUM2: usize = 22;
const S_PUL: usize = 23;
const S_END: usize = 24;
const S_NL: usize = 25;
const G: usize = 26;
const RX: usize = 27;
const RY: usize = 28;
const STARTED: usize = 29;
const HAS2: usize = 30;
const HAS_PNEU: usize = 31;
const HAS_PUL: usize = 32;
const GR: usize = 33;
const RRX: usize = 34;
const RRY: usize = 35;
const TR: usize = 36;
const TD: usize = 37;
const AVGA: usize = 38;
const OUT_YN: usize = 39;
const OUT_CHAOS: usize = 40;
const ABN: usize = 41;
const OUT_G: usize = 42;
const OUT_RX: usize = 43;
const OUT_RY: usize = 44;
const OUT_DX: usize = 45;
const FREE: usize = 46;

const ONE_VALUE: f32 = 8.0;

/// Tunable constants of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    /// Logit gap per unit of GR between " Male" and " Female" (half each).
    pub gender_gain: f32,
    pub race_gain: f32,
    pub yes_no_gain: f32,
    pub ddx_gain: f32,
    pub grammar: f32,
    /// Slope of first-answer-token logits in the task flags.
    pub gate: f32,
    /// Query scale times key scale of the reader heads.
    pub attn_sharpness: f32,
    /// Normalized |feature| on entry to layer 1 above which a position counts
    /// as anomalous.
    pub anomaly_threshold: f32,
    /// Mean anomaly above which output turns to noise.
    pub chaos_threshold: f32,
    pub chaos_gain: f32,
    pub female_condition_prior: f32,
    pub male_condition_prior: f32,
    pub sexed_prior: f32,
    pub demographic_prior: f32,
    pub position_noise: f32,
    pub seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            gender_gain: 2.45,
            race_gain: 4.0,
            yes_no_gain: 40.0,
            ddx_gain: 4.0,
            grammar: 16.0,
            gate: 60.0,
            attn_sharpness: 56.0,
            anomaly_threshold: 0.3,
            chaos_threshold: 0.15,
            chaos_gain: 60.0,
            female_condition_prior: -1.2,
            male_condition_prior: 0.85,
            sexed_prior: 1.7,
            demographic_prior: 0.6,
            position_noise: 0.1,
            seed: 7,
        }
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Answer-grammar tokens, in id order after the single characters.
const GRAMMAR_TOKENS: [&str; 19] = [
    "Gender:", " Gender:", " Male", " Female", ";", " Race:", " White", " Black", " Asian",
    " Hispanic", ".", "Yes.", "No.", "1.", "2.", " Pneumonia", " Pulmonary", " embolism", "\n",
];

/// Prompt chunks kept whole so that prompts never contain answer tokens.
const WHOLE_CHUNKS: [&str; 5] = [" \"Gender:\".", " \"Race:\".", " \"Gender:\",", " \"Ethnicity:\",", " depression?"];

const RACE_WORDS: [(&str, [f32; 2]); 7] = [
    (" White", [1.0, 0.0]),
    (" Caucasian", [1.0, 0.0]),
    (" Black", [-1.0, 0.0]),
    (" African", [-1.0, 0.0]),
    (" Asian", [0.0, 1.0]),
    (" Hispanic", [0.0, -1.0]),
    (" Latino", [0.0, -1.0]),
];

const MALE_WORDS: [&str; 10] = [" Male", " male", " man", " He", "He", " he", " his", " His", " him", " Mr."];
const FEMALE_WORDS: [&str; 10] = [
    " Female", " female", " woman", " She", "She", " she", " her", " Her", " Mrs.", " Ms.",
];

/// Every text the bundled experiments can feed the toy model.
pub fn corpus() -> Vec<String> {
    let mut out = Vec::new();
    let conditions: Vec<&str> = prompts::DEFAULT_CONDITIONS
        .iter()
        .chain(prompts::EXTRA_CONDITIONS.iter())
        .copied()
        .collect();
    for c in &conditions {
        for t in [
            prompts::GENDER_SCAN_TEMPLATE,
            prompts::RACE_SCAN_TEMPLATE,
            prompts::VIGNETTE_TEMPLATE,
        ] {
            out.push(prompts::fill(t, prompts::CONDITION, c));
        }
    }
    let lex = Lexicon::default();
    let notes_text = notes::vocabulary_text();
    let neutral = neutralize_gender(&notes_text, &lex.neutralize).text;
    for p in prompts::risk_prompts_gender()
        .iter()
        .chain(prompts::risk_prompts_race().iter())
    {
        out.push(prompts::fill(p, prompts::BHC, &notes_text));
        out.push(prompts::fill(p, prompts::BHC, &neutral));
    }
    for demo in ["male", "female", "Black", "White"] {
        out.push(prompts::fill(prompts::EXPLICIT_RISK_TEMPLATE, "[DEMOGRAPHIC]", demo));
    }
    for case in [prompts::CASE_GENDER, prompts::CASE_RACE] {
        out.push(prompts::fill(prompts::DDX_TEMPLATE, prompts::CASE, case));
        for demo in ["male", "female", "Caucasian male", "Black male"] {
            out.push(prompts::fill(
                prompts::DDX_TEMPLATE,
                prompts::CASE,
                &prompts::explicit_case(case, demo),
            ));
        }
    }
    for label in ["Male", "Female", "Black", "White", "Asian", "Hispanic", "Caucasian"] {
        out.push(prompts::source_prompt(label));
        out.push(format!("{}.", prompts::source_prompt(label)));
    }
    out
}

/// Whitespace chunks as the plain tokenizer forms them: a single space
/// joins the following run, newlines stand alone.
fn chunks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            out.push(&text[i..i + 1]);
            i += 1;
            continue;
        }
        let start = i;
        if c == b' ' && bytes.get(i + 1).is_some_and(|n| !n.is_ascii_whitespace()) {
            i += 1;
        } else if c.is_ascii_whitespace() {
            out.push(&text[i..i + 1]);
            i += 1;
            continue;
        }
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        out.push(&text[start..i]);
    }
    out
}

/// Word token of a chunk: surrounding punctuation removed, digits rejected.
fn core_word(chunk: &str) -> Option<String> {
    let (space, body) = match chunk.strip_prefix(' ') {
        Some(b) => (" ", b),
        None => ("", chunk),
    };
    let lead = body.trim_start_matches(['"', '(']);
    let space = if lead.len() == body.len() { space } else { "" };
    let word = lead.trim_end_matches(['.', ',', ';', ':', '?', '!', '"', ')']);
    let ok = word.chars().any(char::is_alphabetic)
        && word.chars().all(|c| c.is_ascii_alphabetic() || c == '\'' || c == '-');
    ok.then(|| format!("{space}{word}"))
}

/// Tokenizer description for the toy model.
pub fn toy_tokenizer_file() -> TokenizerFile {
    let mut order: Vec<String> = vec![EOS.into(), USER.into(), ASSISTANT.into()];
    order.extend((0..=255u8).map(|b| format!("<0x{b:02X}>")));
    order.extend((0x20u8..0x7f).map(|b| (b as char).to_string()));
    order.extend(GRAMMAR_TOKENS.iter().map(|s| s.to_string()));
    order.extend(WHOLE_CHUNKS.iter().map(|s| s.to_string()));
    let mut words = BTreeSet::new();
    for text in corpus() {
        for ch in chunks(&text) {
            if let Some(w) = core_word(ch) {
                words.insert(w);
            }
        }
    }
    words.extend(MALE_WORDS.iter().chain(FEMALE_WORDS.iter()).map(|s| s.to_string()));
    words.extend(RACE_WORDS.iter().map(|(w, _)| w.to_string()));
    order.extend(words);

    let mut vocab = BTreeMap::new();
    for tok in order {
        let next = vocab.len() as u32;
        vocab.entry(tok).or_insert(next);
    }
    let special_tokens = BTreeMap::from([
        (EOS.to_string(), 0),
        ("bos".to_string(), 0),
        ("eos".to_string(), 0),
        (USER.to_string(), 1),
        (ASSISTANT.to_string(), 2),
    ]);
    TokenizerFile {
        vocab,
        merges: Vec::new(),
        special_tokens,
        byte_fallback: true,
        encoding: TokenEncoding::Plain,
    }
}

pub fn toy_tokenizer() -> Tokenizer {
    Tokenizer::from_file(toy_tokenizer_file()).expect("toy tokenizer is well formed")
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    fn add(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] += v;
    }

    fn into_tensor(self) -> (Vec<usize>, Vec<f32>) {
        (vec![self.rows, self.cols], self.data)
    }
}

struct Layer {
    q: Mat,
    k: Mat,
    v: Mat,
    o: Mat,
    up: Mat,
    down: Mat,
}

impl Layer {
    fn new() -> Self {
        Self {
            q: Mat::zeros(D, D),
            k: Mat::zeros(D, D),
            v: Mat::zeros(D, D),
            o: Mat::zeros(D, D),
            up: Mat::zeros(D_FF, D),
            down: Mat::zeros(D, D_FF),
        }
    }

    /// Presence-style head: attends to `flags` (sink as fallback) and copies
    /// `(from, to)` feature pairs.
    fn reader(&mut self, head: usize, flags: &[usize], copies: &[(usize, usize)], p: &ToyParams) {
        let base = head * DH;
        // query from ONE (~8 after normalization), key from flags
        let q_scale = 4.0 / ONE_VALUE;
        let k_scale = p.attn_sharpness / 4.0;
        self.q.set(base, ONE, q_scale);
        for &f in flags {
            self.k.set(base, f, k_scale);
        }
        self.k.set(base, SINK, k_scale / 2.0);
        for (i, &(from, to)) in copies.iter().enumerate() {
            self.v.set(base + i, from, 1.0);
            self.o.set(to, base + i, 1.0);
        }
    }

    /// Unit pair computing `gain * x` exactly via `gelu(z) - gelu(-z) = z`.
    fn linear(&mut self, unit: usize, from: usize, to: usize, gain: f32) {
        self.up.set(unit, from, 1.0);
        self.up.set(unit + 1, from, -1.0);
        self.down.set(to, unit, gain);
        self.down.set(to, unit + 1, -gain);
    }
}

fn tokens_of(file: &TokenizerFile) -> Vec<String> {
    let mut v = vec![String::new(); file.vocab.len()];
    for (t, &id) in &file.vocab {
        v[id as usize] = t.clone();
    }
    v
}

fn female_conditions() -> [&'static str; 6] {
    [" sclerosis", " sarcoidosis", " arthristis", " asthma", " bronchitis", " hypertension"]
}

/// Embedding features of one token.
fn embed_row(tok: &str, p: &ToyParams, row: &mut [f32]) {
    row[ONE] = ONE_VALUE;
    let mut set = |dim: usize, v: f32| row[dim] = v;
    if tok == EOS {
        set(SINK, 1.0);
    }
    if female_conditions().contains(&tok) {
        set(COND, 1.0);
        set(GPRIOR, p.female_condition_prior);
    }
    match tok {
        " sarcoidosis" => {
            set(RPX, -1.0);
        }
        " B" => {
            set(COND, 1.0);
            set(RPY, 1.0);
        }
        " cancer" => {
            set(COND, 1.0);
            set(GPRIOR, p.male_condition_prior);
        }
        " prostate" => {
            set(COND, 1.0);
            set(GPRIOR, p.sexed_prior);
        }
        " preeclampsia" => {
            set(COND, 1.0);
            set(GPRIOR, -p.sexed_prior);
        }
        _ => {}
    }
    if MALE_WORDS.contains(&tok) {
        set(GDEMO, 1.0);
        set(GPRIOR, p.demographic_prior);
    }
    if FEMALE_WORDS.contains(&tok) {
        set(GDEMO, 1.0);
        set(GPRIOR, -p.demographic_prior);
    }
    if let Some((_, [x, y])) = RACE_WORDS.iter().find(|(w, _)| *w == tok) {
        set(RDEMO, 1.0);
        set(RPX, *x);
        set(RPY, *y);
    }
    match tok {
        " depression?" => set(RISK, 1.0),
        " diagnoses" => set(DDX, 1.0),
        "Gender:" => {
            set(FIRST, 1.0);
            set(S_GF, 1.0);
        }
        " Gender:" => set(S_GF, 1.0),
        " Male" | " Female" => set(S_GV, 1.0),
        ";" => set(S_SEMI, 1.0),
        " Race:" => set(S_RF, 1.0),
        " White" | " Black" | " Asian" | " Hispanic" => set(S_RV, 1.0),
        "." => set(S_DOT, 1.0),
        "Yes." | "No." => {
            set(FIRST, 1.0);
            set(S_YN, 1.0);
        }
        "1." => {
            set(FIRST, 1.0);
            set(S_NUM1, 1.0);
        }
        "2." => {
            set(TWO, 1.0);
            set(S_NUM2, 1.0);
        }
        " Pneumonia" => {
            set(PNEU, 1.0);
            set(S_END, 1.0);
        }
        " Pulmonary" => {
            set(PUL, 1.0);
            set(S_PUL, 1.0);
        }
        " embolism" => set(S_END, 1.0),
        "\n" => set(S_NL, 1.0),
        _ => {}
    }
}

/// Tokens eligible for high-entropy output: plain words without features.
fn chaos_words(tokens: &[String], p: &ToyParams) -> Vec<usize> {
    let mut row = vec![0.0; D];
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.starts_with(' ') && t.len() > 3 && t[1..].chars().all(|c| c.is_ascii_lowercase()))
        .filter(|(_, t)| {
            row.iter_mut().for_each(|x| *x = 0.0);
            embed_row(t, p, &mut row);
            row[1..].iter().all(|&x| x == 0.0)
        })
        .map(|(i, _)| i)
        .take(150)
        .collect()
}

fn config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: N_LAYERS,
        d_model: D,
        n_heads: N_HEADS,
        n_kv_heads: None,
        d_ff: D_FF,
        vocab_size,
        max_seq_len: MAX_SEQ,
        norm_kind: NormKind::RmsNorm,
        norm_eps: 1e-5,
        rope_enabled: false,
        rope_theta: 10_000.0,
        mlp_kind: MlpKind::Gelu,
    }
}

fn assemble(cfg: ModelConfig, tensors: HashMap<String, (Vec<usize>, Vec<f32>)>) -> TransformerModel {
    let draft = TransformerModel::from_tensors(cfg, tensors, String::new()).expect("toy tensors match config");
    let bytes = toy_format::to_bytes(&draft);
    toy_format::from_bytes(&bytes).expect("toy bytes round-trip")
}

/// The planted toy model for `toy_tokenizer()`.
pub fn build_toy(p: &ToyParams) -> TransformerModel {
    let file = toy_tokenizer_file();
    let tokens = tokens_of(&file);
    let v = tokens.len();
    let mut t: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();

    let mut embed = Mat::zeros(v, D);
    for (id, tok) in tokens.iter().enumerate() {
        embed_row(tok, p, &mut embed.data[id * D..(id + 1) * D]);
    }
    t.insert("tok_embed".into(), embed.into_tensor());

    let mut rng = CounterRng::new(p.seed);
    let mut pos = Mat::zeros(MAX_SEQ, D);
    for r in 0..MAX_SEQ {
        for c in FREE..D {
            pos.set(r, c, p.position_noise * (2.0 * rng.next_f64() as f32 - 1.0));
        }
    }
    t.insert("pos_embed".into(), pos.into_tensor());

    let mut layers: Vec<Layer> = (0..N_LAYERS).map(|_| Layer::new()).collect();

    // layer 1: gender and first half of race
    layers[1].linear(0, GPRIOR, G, 1.0);
    layers[1].linear(2, RPX, RX, 0.5);
    layers[1].linear(4, RPY, RY, 0.5);
    // anomaly units read what layer 0 wrote into the demographic outputs
    for (i, (dim, sign)) in [(G, 1.0), (G, -1.0), (RX, 1.0), (RX, -1.0), (RY, 1.0), (RY, -1.0)]
        .into_iter()
        .enumerate()
    {
        let unit = 6 + i;
        let ka = 10.0;
        layers[1].up.set(unit, dim, sign * ka);
        layers[1].up.set(unit, ONE, -ka * p.anomaly_threshold / ONE_VALUE);
        layers[1].down.set(ABN, unit, 1.0 / 60.0);
    }

    // layer 2: second half of race, presence heads
    layers[2].linear(0, RPX, RX, 0.5);
    layers[2].linear(2, RPY, RY, 0.5);
    layers[2].reader(0, &[FIRST], &[(FIRST, STARTED)], p);
    layers[2].reader(1, &[TWO], &[(TWO, HAS2)], p);
    layers[2].reader(2, &[PNEU], &[(PNEU, HAS_PNEU)], p);
    layers[2].reader(3, &[PUL], &[(PUL, HAS_PUL)], p);

    // layer 3: readers
    {
        let l3 = &mut layers[3];
        l3.reader(0, &[COND, GDEMO], &[(G, GR)], p);
        l3.reader(1, &[COND, RDEMO], &[(RX, RRX), (RY, RRY)], p);
        l3.reader(2, &[RISK, DDX], &[(RISK, TR), (DDX, TD)], p);
        // uniform head: zero query
        let base = 3 * DH;
        l3.v.set(base, ABN, 1.0);
        l3.o.set(AVGA, base, 1.0);

        let k = 20.0;
        let bias = |x: f32| x / ONE_VALUE;
        // yes/no split r = -GR - RRX, active while the risk answer is pending
        let m = 1.0;
        for (unit, sign) in [(3usize, 1.0f32), (4, -1.0)] {
            l3.up.set(unit, TR, k);
            l3.up.set(unit, STARTED, -k);
            l3.up.set(unit, ONE, bias(-0.2 * k));
            l3.up.add(unit, GR, -sign * m);
            l3.up.add(unit, RRX, -sign * m);
            l3.down.set(OUT_YN, unit, sign / (2.0 * m));
        }
        // chaos detector
        l3.up.set(5, AVGA, p.chaos_gain);
        l3.up.set(5, ONE, bias(-p.chaos_gain * p.chaos_threshold));
        l3.down.set(OUT_CHAOS, 5, 1.0 / 6.0);
        // readouts gated by the current token's grammar state
        let readouts: [(usize, &[usize], &[(usize, f32)], usize); 4] = [
            (6, &[S_GF], &[(GR, 1.0)], OUT_G),
            (8, &[S_RF], &[(RRX, 1.0)], OUT_RX),
            (10, &[S_RF], &[(RRY, 1.0)], OUT_RY),
            (12, &[S_NUM1, S_NUM2], &[(GR, 1.0), (RRX, 2.0)], OUT_DX),
        ];
        for (unit, gates, ins, out) in readouts {
            for (u, sign) in [(unit, 1.0f32), (unit + 1, -1.0)] {
                for &g in gates {
                    l3.up.set(u, g, k);
                }
                l3.up.set(u, ONE, bias(-k / 2.0));
                for &(dim, wt) in ins {
                    l3.up.add(u, dim, sign * m * wt);
                }
                l3.down.set(out, u, sign / (2.0 * m));
            }
        }
    }

    for (l, layer) in layers.into_iter().enumerate() {
        let pre = format!("layers.{l}");
        t.insert(format!("{pre}.attn_norm.weight"), (vec![D], vec![1.0; D]));
        t.insert(format!("{pre}.mlp_norm.weight"), (vec![D], vec![1.0; D]));
        t.insert(format!("{pre}.attn.q"), layer.q.into_tensor());
        t.insert(format!("{pre}.attn.k"), layer.k.into_tensor());
        t.insert(format!("{pre}.attn.v"), layer.v.into_tensor());
        t.insert(format!("{pre}.attn.o"), layer.o.into_tensor());
        t.insert(format!("{pre}.mlp.up"), layer.up.into_tensor());
        t.insert(format!("{pre}.mlp.down"), layer.down.into_tensor());
    }
    t.insert("final_norm.weight".into(), (vec![D], vec![1.0; D]));

    let mut un = Mat::zeros(v, D);
    let id = |s: &str| file.vocab[s] as usize;
    let w = p.grammar;
    // first answer token: linear in the task flags so that attention outputs
    // diluted by a scaled residual still decide it
    let first = id("Gender:");
    un.set(first, ONE, p.gate / 2.0 / ONE_VALUE);
    for f in [TR, TD, STARTED] {
        un.set(first, f, -p.gate);
    }
    un.set(id(" Gender:"), S_YN, w);
    for (tok, sign) in [(" Male", 1.0), (" Female", -1.0)] {
        un.set(id(tok), S_GF, w);
        un.set(id(tok), OUT_G, sign * p.gender_gain / 2.0);
    }
    un.set(id(";"), S_GV, w);
    un.set(id(" Race:"), S_SEMI, w);
    for (tok, [x, y]) in RACE_WORDS.iter().filter(|(t, _)| GRAMMAR_TOKENS.contains(t)) {
        un.set(id(tok), S_RF, w);
        un.set(id(tok), OUT_RX, p.race_gain * x);
        un.set(id(tok), OUT_RY, p.race_gain * y);
    }
    un.set(id("."), S_RV, w);
    let eos = id(EOS);
    un.set(eos, S_DOT, 2.5 * w);
    un.set(eos, S_END, 18.0);
    un.set(eos, HAS2, 18.0);
    un.set(eos, ONE, -24.0 / ONE_VALUE);
    un.set(eos, OUT_CHAOS, -60.0);
    for (tok, sign) in [("Yes.", 1.0), ("No.", -1.0)] {
        un.set(id(tok), TR, p.gate);
        un.set(id(tok), STARTED, -p.gate);
        un.set(id(tok), OUT_YN, sign * p.yes_no_gain);
    }
    un.set(id("1."), TD, p.gate);
    un.set(id("1."), STARTED, -p.gate);
    for (tok, has, sign) in [(" Pneumonia", HAS_PNEU, 1.0), (" Pulmonary", HAS_PUL, -1.0)] {
        un.set(id(tok), S_NUM1, 1.5 * w);
        un.set(id(tok), S_NUM2, 1.5 * w);
        un.set(id(tok), has, -40.0);
        un.set(id(tok), OUT_DX, sign * p.ddx_gain);
    }
    un.set(id(" embolism"), S_PUL, w);
    un.set(id("\n"), S_END, w);
    un.set(id("\n"), HAS2, -20.0);
    un.set(id("2."), S_NL, w);
    let mut crng = CounterRng::new(p.seed ^ 0xC4A0_5EED);
    for tok in chaos_words(&tokens, p) {
        un.set(tok, OUT_CHAOS, 40.0 + 15.0 * crng.next_f64() as f32);
    }
    t.insert("unembed".into(), un.into_tensor());

    assemble(config(v), t)
}

/// Same shapes as the toy model, every weight zero: a uniform judge.
pub fn build_uniform(vocab_size: usize) -> TransformerModel {
    let cfg = config(vocab_size);
    let t = cfg
        .tensor_layout()
        .into_iter()
        .map(|(name, shape)| {
            let n = shape.iter().product();
            (name, (shape, vec![0.0; n]))
        })
        .collect();
    assemble(cfg, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_matches_tokenizer() {
        assert_eq!(chunks("a  b\nc \"Gender:\"."), vec!["a", " ", " b", "\n", "c", " \"Gender:\"."]);
        assert_eq!(core_word(" sclerosis.").as_deref(), Some(" sclerosis"));
        assert_eq!(core_word(" \"Race:\".").as_deref(), Some("Race"));
        assert_eq!(core_word(" 63-year-old"), None);
    }

    #[test]
    fn prompts_avoid_answer_tokens() {
        let tok = toy_tokenizer();
        let banned: Vec<u32> = ["Gender:", "Yes.", "No.", "1.", "2.", " Gender:"]
            .iter()
            .map(|s| tok.token_to_id(s).unwrap())
            .collect();
        for text in corpus() {
            let ids = tok.tokenize(&text).unwrap();
            assert!(ids.iter().all(|i| !banned.contains(i)), "{text}");
            assert_eq!(tok.detokenize(&ids).unwrap(), text);
        }
    }

    #[test]
    fn conditions_end_in_flagged_token() {
        let tok = toy_tokenizer();
        for c in prompts::DEFAULT_CONDITIONS {
            let ids = tok.tokenize(&format!(" {c}")).unwrap();
            let last = tok.id_to_token(*ids.last().unwrap()).unwrap();
            assert!(female_conditions().contains(&last), "{c}: {last}");
        }
    }
}
