// SPDX-License-Identifier: MIT OR Apache-2.0

//! Metrics for activation-patching experiments: rewrite scores, demographic
//! classification and flip ratios, risk disparity, assignment checks,
//! perplexity, diagnosis ranks and the Mann-Whitney U test.

mod classify;
mod error;
mod lexicon;
mod rank;
mod risk;
mod scores;
mod stats;

pub use classify::{
    classify_demographic, flip_ratio, flip_ratio_texts, relaxed_assignment, strict_assignment,
    Classification, FlipRatio, Mode,
};
pub use error::{MetricsError, Result};
pub use lexicon::{neutralize_gender, Lexicon, Neutralized, TermHit};
pub use rank::{parse_list_items, rank_of_diagnosis, Rank};
pub use risk::{parse_risk_answer, RiskAnswer};
pub use scores::{delta_risk, perplexity, rewrite_score, RiskOutcomes};
pub use stats::{
    mann_whitney, mann_whitney_exact, mann_whitney_normal, u_statistic, MannWhitney, Method,
    EXACT_LIMIT,
};
