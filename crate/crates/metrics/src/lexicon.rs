// SPDX-License-Identifier: MIT OR Apache-2.0

//! Term lexicons with word-boundary matching, and gender neutralization.
//!
//! Terms match case-insensitively, except single-character terms which match
//! case-sensitively (so the map entry `F` does not rewrite every `f`). A
//! match must not touch an alphanumeric character on a side where the term
//! itself ends in an alphanumeric character.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTerms {
    pub negative: Vec<String>,
    pub affirmative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub gender: BTreeMap<String, Vec<String>>,
    pub race: BTreeMap<String, Vec<String>>,
    pub gender_fields: Vec<String>,
    pub race_fields: Vec<String>,
    pub risk: RiskTerms,
    pub neutralize: BTreeMap<String, String>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
}

fn one() -> u32 {
    1
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Self> {
        let lex: Self = serde_json::from_str(text)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    /// Class term sets must be pairwise disjoint within each family.
    pub fn validate(&self) -> Result<()> {
        for (family, classes) in [("gender", &self.gender), ("race", &self.race)] {
            let mut owner: BTreeMap<String, &str> = BTreeMap::new();
            for (label, terms) in classes {
                if terms.is_empty() {
                    return Err(MetricsError::Lexicon(format!("{family} class {label} has no terms")));
                }
                for t in terms {
                    if t.trim().is_empty() {
                        return Err(MetricsError::Lexicon(format!("{family} class {label} has an empty term")));
                    }
                    if let Some(prev) = owner.insert(t.to_lowercase(), label) {
                        if prev != label {
                            return Err(MetricsError::Lexicon(format!(
                                "{family} term {t:?} belongs to both {prev} and {label}"
                            )));
                        }
                    }
                }
            }
        }
        if self.neutralize.keys().any(|k| k.is_empty()) {
            return Err(MetricsError::Lexicon("empty neutralization term".into()));
        }
        Ok(())
    }

    /// Synonyms of `diagnosis` (the diagnosis itself first).
    pub fn diagnosis_terms(&self, diagnosis: &str) -> Vec<String> {
        let mut out = vec![diagnosis.to_string()];
        if let Some(syn) = self
            .synonyms
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(diagnosis))
            .map(|(_, v)| v)
        {
            out.extend(syn.iter().cloned());
        }
        out
    }
}

/// One matched term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermHit {
    pub start: usize,
    pub end: usize,
    pub term: String,
}

fn is_word(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric())
}

/// All boundary-respecting occurrences of `term` in `text`, by position.
pub(crate) fn find_term(text: &str, term: &str) -> Vec<(usize, usize)> {
    if term.is_empty() {
        return Vec::new();
    }
    let sensitive = term.chars().count() == 1;
    let (hay, needle) = if sensitive {
        (text.to_string(), term.to_string())
    } else {
        (text.to_ascii_lowercase(), term.to_ascii_lowercase())
    };
    let starts_word = is_word(needle.chars().next());
    let ends_word = is_word(needle.chars().next_back());
    hay.match_indices(&needle)
        .filter(|(i, m)| {
            let before = text[..*i].chars().next_back();
            let after = text[i + m.len()..].chars().next();
            !(starts_word && is_word(before)) && !(ends_word && is_word(after))
        })
        .map(|(i, m)| (i, i + m.len()))
        .collect()
}

/// Leftmost-longest non-overlapping hits of any of `terms`.
pub(crate) fn scan<'a>(text: &str, terms: impl IntoIterator<Item = &'a str>) -> Vec<TermHit> {
    let mut all: Vec<TermHit> = terms
        .into_iter()
        .flat_map(|t| {
            find_term(text, t).into_iter().map(move |(start, end)| TermHit {
                start,
                end,
                term: t.to_string(),
            })
        })
        .collect();
    all.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut out: Vec<TermHit> = Vec::new();
    for h in all {
        if out.last().map_or(true, |l| h.start >= l.end) {
            out.push(h);
        }
    }
    out
}

/// Result of [`neutralize_gender`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neutralized {
    pub text: String,
    pub replacements: usize,
}

/// Replace every gendered term with its neutral form, keeping the case of
/// the first letter for multi-letter terms.
pub fn neutralize_gender(text: &str, map: &BTreeMap<String, String>) -> Neutralized {
    let hits = scan(text, map.keys().map(String::as_str));
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for h in &hits {
        out.push_str(&text[at..h.start]);
        let replacement = &map[&h.term];
        let original = &text[h.start..h.end];
        let upper = original.chars().next().is_some_and(char::is_uppercase);
        if upper && original.chars().count() > 1 {
            let mut cs = replacement.chars();
            if let Some(first) = cs.next() {
                out.extend(first.to_uppercase());
                out.push_str(cs.as_str());
            }
        } else {
            out.push_str(replacement);
        }
        at = h.end;
    }
    out.push_str(&text[at..]);
    Neutralized {
        text: out,
        replacements: hits.len(),
    }
}
