// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vocabulary tokenizer with optional BPE merges and byte fallback.
//!
//! Text is first split on special-token strings, then into chunks (a word
//! carries at most one leading space, newlines stand alone). Each chunk is
//! segmented either by BPE merges (when the file lists merges) or by greedy
//! longest match against the vocabulary. Characters with no vocabulary entry
//! become `<0xNN>` byte tokens when byte fallback is enabled.
//!
//! Token strings are stored in one of three encodings:
//!
//! - `plain`: token strings are literal text.
//! - `byte_level`: GPT-2 style byte-to-unicode mapping.
//! - `sentencepiece`: spaces are written as `▁`.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TokenizerError;

/// How token strings map back to text bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenEncoding {
    #[default]
    Plain,
    ByteLevel,
    Sentencepiece,
}

/// On-disk tokenizer description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenizerFile {
    pub vocab: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merges: Vec<String>,
    #[serde(default)]
    pub special_tokens: BTreeMap<String, u32>,
    #[serde(default)]
    pub byte_fallback: bool,
    #[serde(default)]
    pub encoding: TokenEncoding,
}

/// A token id together with the byte range of the input it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub id: u32,
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: HashMap<String, u32>,
    id_to_token: Vec<String>,
    merge_ranks: HashMap<(String, String), usize>,
    byte_fallback: bool,
    byte_tokens: Vec<Option<u32>>,
    special_tokens: BTreeMap<String, u32>,
    // (token string, id), longest first
    special_matchers: Vec<(String, u32)>,
    special_ids: HashMap<u32, ()>,
    encoding: TokenEncoding,
    max_token_chars: usize,
}

impl Tokenizer {
    pub fn from_file(file: TokenizerFile) -> Result<Self, TokenizerError> {
        let n = file.vocab.len();
        let mut id_to_token = vec![None; n];
        for (tok, &id) in &file.vocab {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| TokenizerError::Format(format!("vocab id {id} not dense")))?;
            if slot.is_some() {
                return Err(TokenizerError::Format(format!("duplicate vocab id {id}")));
            }
            *slot = Some(tok.clone());
        }
        let id_to_token: Vec<String> = id_to_token
            .into_iter()
            .map(|t| t.expect("dense ids checked above"))
            .collect();

        let mut merge_ranks = HashMap::new();
        for (rank, line) in file.merges.iter().enumerate() {
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| TokenizerError::Format(format!("merge {line:?} is not \"a b\"")))?;
            merge_ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
        }

        for (name, &id) in &file.special_tokens {
            if id as usize >= n {
                return Err(TokenizerError::Format(format!(
                    "special token {name} has id {id} outside vocabulary"
                )));
            }
        }
        let mut special_matchers: Vec<(String, u32)> = file
            .special_tokens
            .values()
            .map(|&id| (id_to_token[id as usize].clone(), id))
            .filter(|(s, _)| !s.is_empty())
            .collect();
        special_matchers.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        special_matchers.dedup();
        let special_ids = file.special_tokens.values().map(|&id| (id, ())).collect();

        let mut byte_tokens = vec![None; 256];
        for (b, slot) in byte_tokens.iter_mut().enumerate() {
            *slot = file.vocab.get(&format!("<0x{b:02X}>")).copied();
        }
        let max_token_chars = id_to_token.iter().map(|t| t.chars().count()).max().unwrap_or(1);

        Ok(Self {
            vocab: file.vocab.into_iter().collect(),
            id_to_token,
            merge_ranks,
            byte_fallback: file.byte_fallback,
            byte_tokens,
            special_tokens: file.special_tokens,
            special_matchers,
            special_ids,
            encoding: file.encoding,
            max_token_chars,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TokenizerError> {
        let file: TokenizerFile =
            serde_json::from_slice(bytes).map_err(|e| TokenizerError::Format(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| TokenizerError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Serializable form, ids in ascending order.
    pub fn to_file(&self) -> TokenizerFile {
        let mut merges: Vec<(&(String, String), &usize)> = self.merge_ranks.iter().collect();
        merges.sort_by_key(|(_, r)| **r);
        TokenizerFile {
            vocab: self
                .id_to_token
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect(),
            merges: merges.into_iter().map(|((a, b), _)| format!("{a} {b}")).collect(),
            special_tokens: self.special_tokens.clone(),
            byte_fallback: self.byte_fallback,
            encoding: self.encoding,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn token_to_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn id_to_token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Id of a named special token (e.g. `"eos"`).
    pub fn special(&self, name: &str) -> Option<u32> {
        self.special_tokens.get(name).copied()
    }

    pub fn special_tokens(&self) -> &BTreeMap<String, u32> {
        &self.special_tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special_ids.contains_key(&id)
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        Ok(self
            .tokenize_with_offsets(text)?
            .into_iter()
            .map(|s| s.id)
            .collect())
    }

    /// Tokenize and report the byte range each token covers in `text`.
    pub fn tokenize_with_offsets(&self, text: &str) -> Result<Vec<TokenSpan>, TokenizerError> {
        let mut out = Vec::new();
        let mut seg_start = 0;
        let mut i = 0;
        let bytes = text.as_bytes();
        while i < bytes.len() {
            if let Some((s, id)) = self.match_special(&text[i..]) {
                self.tokenize_segment(text, seg_start..i, &mut out)?;
                out.push(TokenSpan {
                    id,
                    range: i..i + s.len(),
                });
                i += s.len();
                seg_start = i;
            } else {
                i += utf8_len(bytes[i]);
            }
        }
        self.tokenize_segment(text, seg_start..bytes.len(), &mut out)?;
        Ok(out)
    }

    /// Vocabulary lookup for text pieces; byte-fallback and special tokens
    /// are never produced from ordinary text.
    fn lookup(&self, piece: &str) -> Option<u32> {
        let id = *self.vocab.get(piece)?;
        if self.is_special(id) || self.byte_token_value(piece).is_some() {
            return None;
        }
        Some(id)
    }

    fn byte_token_value(&self, tok: &str) -> Option<u8> {
        match self.encoding {
            TokenEncoding::ByteLevel => None,
            _ => parse_byte_token(tok),
        }
    }

    fn match_special(&self, rest: &str) -> Option<(&str, u32)> {
        self.special_matchers
            .iter()
            .find(|(s, _)| rest.starts_with(s.as_str()))
            .map(|(s, id)| (s.as_str(), *id))
    }

    fn tokenize_segment(
        &self,
        text: &str,
        range: Range<usize>,
        out: &mut Vec<TokenSpan>,
    ) -> Result<(), TokenizerError> {
        if range.is_empty() {
            return Ok(());
        }
        for chunk in split_chunks(&text[range.clone()], self.encoding) {
            let chunk = chunk.start + range.start..chunk.end + range.start;
            self.tokenize_chunk(text, chunk, out)?;
        }
        Ok(())
    }

    fn tokenize_chunk(
        &self,
        text: &str,
        range: Range<usize>,
        out: &mut Vec<TokenSpan>,
    ) -> Result<(), TokenizerError> {
        let symbols = self.encode_symbols(&text[range.clone()], range.start);
        let whole: String = symbols.iter().map(|s| s.text.as_str()).collect();
        if let Some(id) = self.lookup(&whole) {
            out.push(TokenSpan { id, range });
            return Ok(());
        }
        let pieces = if self.merge_ranks.is_empty() {
            self.greedy(&symbols)
        } else {
            self.bpe(symbols)
        };
        for piece in pieces {
            match self.lookup(&piece.text) {
                Some(id) => out.push(TokenSpan {
                    id,
                    range: piece.range,
                }),
                None => self.fallback(text, piece.range, out)?,
            }
        }
        Ok(())
    }

    /// Emit byte tokens for every byte of the source range.
    fn fallback(
        &self,
        text: &str,
        range: Range<usize>,
        out: &mut Vec<TokenSpan>,
    ) -> Result<(), TokenizerError> {
        if !self.byte_fallback {
            let ch = text[range.start..].chars().next().unwrap_or('\u{FFFD}');
            return Err(TokenizerError::Unrepresentable {
                ch,
                offset: range.start,
            });
        }
        for pos in range {
            let b = text.as_bytes()[pos];
            let id = self.byte_tokens[b as usize].ok_or(TokenizerError::MissingByteToken(b))?;
            out.push(TokenSpan {
                id,
                range: pos..pos + 1,
            });
        }
        Ok(())
    }

    fn encode_symbols(&self, chunk: &str, base: usize) -> Vec<Symbol> {
        match self.encoding {
            TokenEncoding::Plain => chunk
                .char_indices()
                .map(|(i, c)| Symbol {
                    text: c.to_string(),
                    range: base + i..base + i + c.len_utf8(),
                })
                .collect(),
            TokenEncoding::Sentencepiece => chunk
                .char_indices()
                .map(|(i, c)| Symbol {
                    text: if c == ' ' { '\u{2581}'.to_string() } else { c.to_string() },
                    range: base + i..base + i + c.len_utf8(),
                })
                .collect(),
            TokenEncoding::ByteLevel => chunk
                .bytes()
                .enumerate()
                .map(|(i, b)| Symbol {
                    text: byte_to_unicode(b).to_string(),
                    range: base + i..base + i + 1,
                })
                .collect(),
        }
    }

    fn greedy(&self, symbols: &[Symbol]) -> Vec<Symbol> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < symbols.len() {
            let max_j = (i + self.max_token_chars).min(symbols.len());
            let mut chosen = None;
            for j in (i + 1..=max_j).rev() {
                let cand: String = symbols[i..j].iter().map(|s| s.text.as_str()).collect();
                if self.lookup(&cand).is_some() {
                    chosen = Some((j, cand));
                    break;
                }
            }
            match chosen {
                Some((j, text)) => {
                    out.push(Symbol {
                        text,
                        range: symbols[i].range.start..symbols[j - 1].range.end,
                    });
                    i = j;
                }
                None => {
                    out.push(symbols[i].clone());
                    i += 1;
                }
            }
        }
        out
    }

    fn bpe(&self, mut symbols: Vec<Symbol>) -> Vec<Symbol> {
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in 0..symbols.len().saturating_sub(1) {
                let key = (symbols[i].text.clone(), symbols[i + 1].text.clone());
                if let Some(&rank) = self.merge_ranks.get(&key) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((_, i)) = best else { break };
            let right = symbols.remove(i + 1);
            let left = &mut symbols[i];
            left.text.push_str(&right.text);
            left.range.end = right.range.end;
        }
        symbols
    }

    /// Convert ids back to text. Special tokens render as their strings.
    pub fn detokenize(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            let tok = self.id_to_token.get(id as usize).ok_or(TokenizerError::UnknownId {
                id,
                vocab_size: self.vocab_size(),
            })?;
            if let Some(b) = self.byte_token_value(tok) {
                bytes.push(b);
                continue;
            }
            if self.is_special(id) {
                bytes.extend_from_slice(tok.as_bytes());
                continue;
            }
            match self.encoding {
                TokenEncoding::Plain => bytes.extend_from_slice(tok.as_bytes()),
                TokenEncoding::Sentencepiece => {
                    bytes.extend_from_slice(tok.replace('\u{2581}', " ").as_bytes())
                }
                TokenEncoding::ByteLevel => {
                    for c in tok.chars() {
                        match unicode_to_byte(c) {
                            Some(b) => bytes.push(b),
                            None => {
                                let mut buf = [0u8; 4];
                                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                            }
                        }
                    }
                }
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

#[derive(Debug, Clone)]
struct Symbol {
    text: String,
    range: Range<usize>,
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7F => 1,
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        _ => 4,
    }
}

fn parse_byte_token(tok: &str) -> Option<u8> {
    let hex = tok.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

/// Split a segment into chunks; concatenating the chunks yields the input.
///
/// Plain and sentencepiece: a single space attaches to the following word,
/// `\n` is its own chunk, extra spaces stand alone. Byte-level additionally
/// separates letters, digits and punctuation runs.
fn split_chunks(s: &str, encoding: TokenEncoding) -> Vec<Range<usize>> {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Letter,
        Digit,
        Other,
    }
    let class = |c: char| {
        if encoding != TokenEncoding::ByteLevel {
            Class::Other
        } else if c.is_alphabetic() {
            Class::Letter
        } else if c.is_numeric() {
            Class::Digit
        } else {
            Class::Other
        }
    };
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let end_of = |k: usize| chars.get(k).map_or(s.len(), |(i, _)| *i);
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (start, c) = chars[k];
        if c == '\n' {
            out.push(start..start + 1);
            k += 1;
            continue;
        }
        if c.is_whitespace() {
            let next = chars.get(k + 1).map(|(_, c)| *c);
            let attaches = c == ' ' && matches!(next, Some(n) if !n.is_whitespace());
            if !attaches {
                out.push(start..end_of(k + 1));
                k += 1;
                continue;
            }
            // " word": the space joins the run that follows
            let run_class = class(chars[k + 1].1);
            let mut j = k + 2;
            while j < chars.len() && !chars[j].1.is_whitespace() && class(chars[j].1) == run_class {
                j += 1;
            }
            out.push(start..end_of(j));
            k = j;
            continue;
        }
        let run_class = class(c);
        let mut j = k + 1;
        while j < chars.len() && !chars[j].1.is_whitespace() && class(chars[j].1) == run_class {
            j += 1;
        }
        out.push(start..end_of(j));
        k = j;
    }
    out
}

fn byte_unicode_table() -> &'static [char; 256] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = ['\0'; 256];
        let printable = |b: u32| (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b);
        let mut extra = 0u32;
        for b in 0..256u32 {
            table[b as usize] = if printable(b) {
                char::from_u32(b).expect("latin-1 codepoint")
            } else {
                extra += 1;
                char::from_u32(255 + extra).expect("valid codepoint")
            };
        }
        table
    })
}

fn byte_to_unicode(b: u8) -> char {
    byte_unicode_table()[b as usize]
}

fn unicode_to_byte(c: char) -> Option<u8> {
    byte_unicode_table().iter().position(|&x| x == c).map(|p| p as u8)
}
