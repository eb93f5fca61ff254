// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank of the correct diagnosis in a generated differential list.

use serde::{Deserialize, Serialize};

use crate::lexicon::find_term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    /// 1-based position in the list.
    Found(usize),
    NotFound,
}

impl Rank {
    pub fn value(&self) -> Option<usize> {
        match self {
            Rank::Found(r) => Some(*r),
            Rank::NotFound => None,
        }
    }
}

/// Strip a list marker (`1.`, `2)`, `-`, `*`, `•`) from a line.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Some(rest.trim_start());
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(r.trim_start());
        }
    }
    None
}

/// Items of a numbered or bulleted list, in order. Text without any marker
/// is read one item per non-empty line.
pub fn parse_list_items(text: &str) -> Vec<&str> {
    let marked: Vec<&str> = text.lines().filter_map(strip_marker).collect();
    if !marked.is_empty() {
        return marked;
    }
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Rank of the first item naming `diagnosis` or one of `synonyms`.
pub fn rank_of_diagnosis<S: AsRef<str>>(text: &str, diagnosis: &str, synonyms: &[S]) -> Rank {
    let terms: Vec<&str> = std::iter::once(diagnosis)
        .chain(synonyms.iter().map(AsRef::as_ref))
        .collect();
    parse_list_items(text)
        .iter()
        .position(|item| terms.iter().any(|t| !find_term(item, t).is_empty()))
        .map_or(Rank::NotFound, |i| Rank::Found(i + 1))
}
