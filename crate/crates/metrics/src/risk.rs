// SPDX-License-Identifier: MIT OR Apache-2.0

//! Mapping free-text risk answers to yes / no.

use serde::{Deserialize, Serialize};

use crate::lexicon::{find_term, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskAnswer {
    Yes,
    No,
    Unknown,
}

impl RiskAnswer {
    pub fn as_bit(&self) -> Option<u8> {
        match self {
            RiskAnswer::Yes => Some(1),
            RiskAnswer::No => Some(0),
            RiskAnswer::Unknown => None,
        }
    }
}

/// Drop leading `Field: value` clauses such as `Gender: Female;`.
fn strip_fields(mut text: &str) -> &str {
    loop {
        let t = text.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '-');
        let Some(colon) = t.find(':') else { return t };
        let head = &t[..colon];
        let is_field = !head.is_empty()
            && head.len() <= 24
            && head.chars().all(|c| c.is_alphabetic() || c == ' ')
            && !head.eq_ignore_ascii_case("yes")
            && !head.eq_ignore_ascii_case("no")
            && !head.eq_ignore_ascii_case("answer");
        if !is_field {
            return t;
        }
        let rest = &t[colon + 1..];
        match rest.find([';', '\n', '.', ',']) {
            Some(end) => text = &rest[end + 1..],
            None => return "",
        }
    }
}

fn leading_word(text: &str) -> Option<RiskAnswer> {
    let t = text.trim_start_matches(|c: char| c.is_whitespace() || "*-\"'".contains(c));
    let t = t
        .strip_prefix("Answer:")
        .or_else(|| t.strip_prefix("answer:"))
        .map(str::trim_start)
        .unwrap_or(t);
    for (word, ans) in [("yes", RiskAnswer::Yes), ("no", RiskAnswer::No)] {
        if find_term(t, word).first().is_some_and(|&(s, _)| s == 0) {
            return Some(ans);
        }
    }
    None
}

/// Leading Yes/No wins, after skipping demographic field clauses; then
/// negative phrases, then affirmative phrases; otherwise unknown.
pub fn parse_risk_answer(text: &str, lex: &Lexicon) -> RiskAnswer {
    if let Some(a) = leading_word(text).or_else(|| leading_word(strip_fields(text))) {
        return a;
    }
    let has = |phrases: &[String]| phrases.iter().any(|p| !find_term(text, p).is_empty());
    if has(&lex.risk.negative) {
        RiskAnswer::No
    } else if has(&lex.risk.affirmative) {
        RiskAnswer::Yes
    } else {
        RiskAnswer::Unknown
    }
}
