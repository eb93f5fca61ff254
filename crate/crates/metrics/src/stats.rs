// SPDX-License-Identifier: MIT OR Apache-2.0

//! Mann-Whitney U test.
//!
//! `U` counts pairs `(x in a, y in b)` with `x > y`, ties as one half. The
//! two-sided p-value is `P(|U - n_a n_b / 2| >= |u - n_a n_b / 2|)` under
//! random relabelling of the pooled sample. Small problems enumerate that
//! distribution exactly (ties included); larger ones use the normal
//! approximation with tie and continuity corrections.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MetricsError, Result};

/// Largest `|a| * |b|` handled by exact enumeration.
pub const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u: f64,
    pub p: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub method: Method,
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty("Mann-Whitney sample"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(MetricsError::Invalid("NaN in Mann-Whitney sample".into()));
    }
    Ok(())
}

/// Twice the U statistic, as an integer.
fn two_u(a: &[f64], b: &[f64]) -> u64 {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| match x.partial_cmp(y).expect("no NaN") {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                })
                .sum::<u64>()
        })
        .sum()
}

pub fn u_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    Ok(two_u(a, b) as f64 / 2.0)
}

/// Sizes of the tie groups of the pooled sample, in ascending value order.
fn tie_groups(a: &[f64], b: &[f64]) -> Vec<usize> {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).expect("no NaN"));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let j = pooled[i..].iter().take_while(|&&v| v == pooled[i]).count();
        groups.push(j);
        i += j;
    }
    groups
}

fn binomial_row(n: usize) -> Vec<u128> {
    let mut row = vec![1u128; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n - k + 1) as u128 / k as u128;
    }
    row
}

/// Exact permutation test over all `C(n_a + n_b, n_a)` labellings.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let max2u = 2 * na * nb;
    // dp[k][t]: labellings of the groups seen so far with k items in `a`
    // and twice-U equal to t.
    let mut dp = vec![vec![0u128; max2u + 1]; na + 1];
    dp[0][0] = 1;
    let mut seen = 0usize;
    for g in tie_groups(a, b) {
        let binom = binomial_row(g);
        let mut next = vec![vec![0u128; max2u + 1]; na + 1];
        for k in 0..=na.min(seen) {
            let below_b = seen - k;
            if below_b > nb {
                continue;
            }
            for (t, &ways) in dp[k].iter().enumerate() {
                if ways == 0 {
                    continue;
                }
                for j in 0..=g.min(na - k) {
                    if g - j > nb - below_b {
                        continue;
                    }
                    let t2 = t + j * 2 * below_b + j * (g - j);
                    next[k + j][t2] += ways * binom[j];
                }
            }
        }
        dp = next;
        seen += g;
    }
    let center = (na * nb) as i64;
    let obs = two_u(a, b) as i64;
    let d_obs = (obs - center).abs();
    let total: u128 = dp[na].iter().sum();
    let tail: u128 = dp[na]
        .iter()
        .enumerate()
        .filter(|(t, _)| (*t as i64 - center).abs() >= d_obs)
        .map(|(_, &w)| w)
        .sum();
    Ok(MannWhitney {
        u: obs as f64 / 2.0,
        p: (tail as f64 / total as f64).min(1.0),
        n_a: na,
        n_b: nb,
        method: Method::Exact,
    })
}

/// Normal approximation with tie-corrected variance and a continuity
/// correction of one half.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = two_u(a, b) as f64 / 2.0;
    let mean = na * nb / 2.0;
    let ties: f64 = tie_groups(a, b)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)).max(1.0));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p,
        n_a: a.len(),
        n_b: b.len(),
        method: Method::Normal,
    })
}

/// Exact when `|a| * |b| <= EXACT_LIMIT`, normal approximation otherwise.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    if a.len() * b.len() <= EXACT_LIMIT {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}
