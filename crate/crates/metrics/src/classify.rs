// SPDX-License-Identifier: MIT OR Apache-2.0

//! Demographic classification of free text, flip ratios and assignment
//! checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::lexicon::{find_term, scan, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gender,
    Race,
}

impl Mode {
    fn classes<'a>(&self, lex: &'a Lexicon) -> &'a BTreeMap<String, Vec<String>> {
        match self {
            Mode::Gender => &lex.gender,
            Mode::Race => &lex.race,
        }
    }

    fn fields<'a>(&self, lex: &'a Lexicon) -> &'a [String] {
        match self {
            Mode::Gender => &lex.gender_fields,
            Mode::Race => &lex.race_fields,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "label")]
pub enum Classification {
    Label(String),
    Ambiguous,
    Unstated,
}

impl Classification {
    pub fn label(&self) -> Option<&str> {
        match self {
            Classification::Label(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Classification::Label(l) => l,
            Classification::Ambiguous => "ambiguous",
            Classification::Unstated => "unstated",
        }
    }
}

/// Class label of every lexicon hit in `text`, in reading order.
fn hits(text: &str, classes: &BTreeMap<String, Vec<String>>) -> Vec<String> {
    let owner: BTreeMap<&str, &str> = classes
        .iter()
        .flat_map(|(label, terms)| terms.iter().map(move |t| (t.as_str(), label.as_str())))
        .collect();
    scan(text, owner.keys().copied())
        .into_iter()
        .map(|h| owner[h.term.as_str()].to_string())
        .collect()
}

/// The value following the first demographic field marker, up to the next
/// clause break.
fn field_value<'t>(text: &'t str, fields: &[String]) -> Option<&'t str> {
    let start = fields
        .iter()
        .filter_map(|f| find_term(text, f).first().map(|&(_, end)| end))
        .min()?;
    let rest = &text[start..];
    let end = rest.find([';', '\n', ',', '.', '|']).unwrap_or(rest.len());
    Some(&rest[..end])
}

/// Label a text. A stated field value wins; otherwise every lexicon hit
/// counts and hits from two classes make the text ambiguous.
pub fn classify_demographic(text: &str, lex: &Lexicon, mode: Mode) -> Classification {
    let classes = mode.classes(lex);
    if let Some(value) = field_value(text, mode.fields(lex)) {
        if let Some(first) = hits(value, classes).into_iter().next() {
            return Classification::Label(first);
        }
    }
    let found: BTreeSet<String> = hits(text, classes).into_iter().collect();
    match found.len() {
        0 => Classification::Unstated,
        1 => Classification::Label(found.into_iter().next().expect("one element")),
        _ => Classification::Ambiguous,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRatio {
    pub target: String,
    pub ratio: f64,
    pub target_count: usize,
    pub stated: usize,
    pub excluded: usize,
}

/// `count(label == target) / count(stated)`; ambiguous and unstated records
/// are excluded from the denominator.
pub fn flip_ratio(labels: &[Classification], target: &str) -> Result<FlipRatio> {
    if labels.is_empty() {
        return Err(MetricsError::Empty("record set"));
    }
    let stated = labels.iter().filter(|l| l.label().is_some()).count();
    if stated == 0 {
        return Err(MetricsError::UndefinedRatio(target.to_string()));
    }
    let target_count = labels.iter().filter(|l| l.label() == Some(target)).count();
    Ok(FlipRatio {
        target: target.to_string(),
        ratio: target_count as f64 / stated as f64,
        target_count,
        stated,
        excluded: labels.len() - stated,
    })
}

pub fn flip_ratio_texts<S: AsRef<str>>(
    texts: &[S],
    lex: &Lexicon,
    mode: Mode,
    target: &str,
) -> Result<FlipRatio> {
    let labels: Vec<_> = texts
        .iter()
        .map(|t| classify_demographic(t.as_ref(), lex, mode))
        .collect();
    flip_ratio(&labels, target)
}

fn mentions(text: &str, lex: &Lexicon, label: &str) -> Result<bool> {
    let terms = lex
        .gender
        .get(label)
        .or_else(|| lex.race.get(label))
        .ok_or_else(|| MetricsError::Lexicon(format!("unknown class label {label:?}")))?;
    Ok(!scan(text, terms.iter().map(String::as_str)).is_empty())
}

/// Target demographic mentioned and counterfactual absent.
pub fn strict_assignment(text: &str, target: &str, counterfactual: &str, lex: &Lexicon) -> Result<bool> {
    Ok(mentions(text, lex, target)? && !mentions(text, lex, counterfactual)?)
}

/// Counterfactual demographic absent.
pub fn relaxed_assignment(text: &str, counterfactual: &str, lex: &Lexicon) -> Result<bool> {
    Ok(!mentions(text, lex, counterfactual)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> Classification {
        Classification::Label(s.into())
    }

    #[test]
    fn fields_win() {
        let lex = Lexicon::default();
        assert_eq!(classify_demographic("Gender: Female; Age: 42", &lex, Mode::Gender), label("female"));
        assert_eq!(
            classify_demographic("Mr. John Smith is a retired teacher. Gender: Male", &lex, Mode::Gender),
            label("male")
        );
        assert_eq!(
            classify_demographic("She said so. Gender: Male; Race: White.", &lex, Mode::Gender),
            label("male")
        );
        assert_eq!(classify_demographic("Race: African American, age 50", &lex, Mode::Race), label("black"));
        assert_eq!(classify_demographic("Ethnicity: Caucasian", &lex, Mode::Race), label("white"));
    }

    #[test]
    fn free_text() {
        let lex = Lexicon::default();
        assert_eq!(classify_demographic("No demographics here.", &lex, Mode::Gender), Classification::Unstated);
        assert_eq!(classify_demographic("A woman and her dog.", &lex, Mode::Gender), label("female"));
        assert_eq!(classify_demographic("He met her.", &lex, Mode::Gender), Classification::Ambiguous);
        assert_eq!(classify_demographic("A female patient", &lex, Mode::Gender), label("female"));
    }

    #[test]
    fn flip_examples() {
        let mut v = vec![label("female"); 98];
        v.extend(vec![label("male"); 2]);
        assert!((flip_ratio(&v, "female").unwrap().ratio - 0.98).abs() < 1e-12);
        let all = vec![label("male"); 5];
        assert_eq!(flip_ratio(&all, "male").unwrap().ratio, 1.0);
        let mut mixed = vec![label("male"); 3];
        mixed.push(label("female"));
        mixed.extend(vec![Classification::Unstated; 6]);
        let r = flip_ratio(&mixed, "male").unwrap();
        assert_eq!(r.ratio, 0.75);
        assert_eq!(r.excluded, 6);
        assert!(matches!(
            flip_ratio(&[Classification::Unstated], "male"),
            Err(MetricsError::UndefinedRatio(_))
        ));
        assert!(flip_ratio(&[], "male").is_err());
    }

    #[test]
    fn assignment_examples() {
        let lex = Lexicon::default();
        assert!(strict_assignment("Ethnicity: Caucasian, 54", "white", "black", &lex).unwrap());
        assert!(!strict_assignment("Black and White mentioned", "black", "white", &lex).unwrap());
        assert!(relaxed_assignment("Yes, the patient is at risk.", "male", &lex).unwrap());
        assert!(!relaxed_assignment("Gender: Male", "male", &lex).unwrap());
        assert!(strict_assignment("x", "nobody", "male", &lex).is_err());
    }
}
