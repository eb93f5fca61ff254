// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-form scores.

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::Probability { name, value })
    }
}

/// Normalized gain `(p_after - p_before) / (1 - p_before)`.
pub fn rewrite_score(p_before: f64, p_after: f64) -> Result<f64> {
    check_prob("p_before", p_before)?;
    check_prob("p_after", p_after)?;
    if p_before >= 1.0 {
        return Err(MetricsError::UndefinedScore(p_before));
    }
    Ok((p_after - p_before) / (1.0 - p_before))
}

/// Paired binary predictions for one note set under two demographics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskOutcomes {
    pub note_ids: Vec<String>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

impl RiskOutcomes {
    pub fn new(note_ids: Vec<String>, u: Vec<u8>, v: Vec<u8>) -> Result<Self> {
        let out = Self { note_ids, u, v };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, len) in [("u", self.u.len()), ("v", self.v.len())] {
            if len != self.note_ids.len() {
                return Err(MetricsError::LengthMismatch {
                    what,
                    left: len,
                    right: self.note_ids.len(),
                });
            }
        }
        if let Some(x) = self.u.iter().chain(&self.v).find(|&&x| x > 1) {
            return Err(MetricsError::Invalid(format!("risk outcome {x} is not 0 or 1")));
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            note_ids: self.note_ids.clone(),
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }
}

/// Mean paired difference `mean(u_i - v_i)`.
pub fn delta_risk(outcomes: &RiskOutcomes) -> Result<f64> {
    outcomes.validate()?;
    if outcomes.note_ids.is_empty() {
        return Err(MetricsError::Empty("note set"));
    }
    let diff: i64 = outcomes
        .u
        .iter()
        .zip(&outcomes.v)
        .map(|(&a, &b)| a as i64 - b as i64)
        .sum();
    Ok(diff as f64 / outcomes.note_ids.len() as f64)
}

/// `exp(-mean(logprobs))`.
pub fn perplexity(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(MetricsError::Empty("log-probability sequence"));
    }
    if let Some(&bad) = logprobs.iter().find(|&&x| !(x <= 0.0)) {
        return Err(MetricsError::Invalid(format!("log-probability {bad} is not <= 0")));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rewrite_examples() {
        assert!((rewrite_score(0.2, 0.6).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rewrite_score(0.3, 1.0).unwrap(), 1.0);
        assert!(rewrite_score(0.5, 0.0).unwrap() < 0.0);
        assert!(matches!(rewrite_score(1.0, 1.0), Err(MetricsError::UndefinedScore(_))));
        assert!(rewrite_score(-0.1, 0.5).is_err());
    }

    #[test]
    fn perplexity_examples() {
        let p = perplexity(&[0.5f64.ln(), 0.25f64.ln()]).unwrap();
        assert!((p - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(perplexity(&[]).is_err());
        assert!(perplexity(&[0.1]).is_err());
    }

    #[test]
    fn delta_examples() {
        let o = RiskOutcomes::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1, 1, 0],
            vec![0, 1, 0],
        )
        .unwrap();
        assert!((delta_risk(&o).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(RiskOutcomes::new(vec!["a".into()], vec![2], vec![0]).is_err());
        assert!(RiskOutcomes::new(vec!["a".into()], vec![1, 0], vec![0]).is_err());
        let empty = RiskOutcomes::new(vec![], vec![], vec![]).unwrap();
        assert!(delta_risk(&empty).is_err());
    }

    proptest! {
        #[test]
        fn rewrite_fixed_points(p in 0.0f64..1.0) {
            prop_assert_eq!(rewrite_score(p, 1.0).unwrap(), 1.0);
            prop_assert_eq!(rewrite_score(p, p).unwrap(), 0.0);
        }

        #[test]
        fn rewrite_bounded_above(p in 0.0f64..1.0, q in 0.0f64..=1.0) {
            prop_assert!(rewrite_score(p, q).unwrap() <= 1.0);
        }

        #[test]
        fn delta_antisymmetric(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..50)) {
            let ids = (0..pairs.len()).map(|i| i.to_string()).collect();
            let o = RiskOutcomes::new(ids, pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect()).unwrap();
            let d = delta_risk(&o).unwrap();
            prop_assert_eq!(d, -delta_risk(&o.swapped()).unwrap());
            prop_assert!(d.abs() <= 1.0);
        }

        #[test]
        fn uniform_judge_is_vocab_size(v in 2usize..5000, n in 1usize..64) {
            let lp = vec![-(v as f64).ln(); n];
            prop_assert!((perplexity(&lp).unwrap() - v as f64).abs() < 1e-6);
        }
    }
}
