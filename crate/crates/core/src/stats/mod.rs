//! Per-subject comparisons between the baseline and Bet-and-Run samples.

mod ranksum;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Direction;
use crate::surrogate::SubjectId;

pub use ranksum::{midranks, rank_sum_test, RankSumResult, EXACT_LIMIT};
pub use table::{aggregate, metric_title, significant_class_report, AggregateTable, MetricRow, SignificantRow};

/// Default significance level.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("per-subject vectors differ in length ({baseline} vs {bar})")]
    LengthMismatch { baseline: usize, bar: usize },
}

/// How Bet-and-Run compares to the baseline on one metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equal,
    BarWorse,
    BarBetter,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Equal => "EQUAL",
            Verdict::BarWorse => "BAR_WORSE",
            Verdict::BarBetter => "BAR_BETTER",
        })
    }
}

/// One value per repetition for each side.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub subject: SubjectId,
    pub metric: String,
    pub direction: Direction,
    pub baseline: Vec<f64>,
    pub bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub subject: SubjectId,
    pub metric: String,
    pub p_value: f64,
    pub direction: Verdict,
    pub significant: bool,
}

/// Rank-sum test plus a direction read off the mean ranks.
///
/// `Equal` means both samples have the same mean rank, i.e. the rank sum
/// sits exactly at its null midpoint.
pub fn classify(sample: &SampleSet, alpha: f64) -> Result<ComparisonRecord, StatsError> {
    let test = rank_sum_test(&sample.baseline, &sample.bar)?;
    let (m, n) = (sample.baseline.len() as f64, sample.bar.len() as f64);
    // baseline mean rank vs bar mean rank, both from the same pooled ranking
    let total = (m + n) * (m + n + 1.0) / 2.0;
    let base_sum = test.statistic;
    let bar_sum = total - base_sum;
    // rank sums are multiples of 0.5, so the cross products are exact
    let (base_scaled, bar_scaled) = (base_sum * n, bar_sum * m);
    let direction = if base_scaled == bar_scaled {
        Verdict::Equal
    } else {
        let bar_ranks_lower = bar_scaled < base_scaled;
        match (sample.direction, bar_ranks_lower) {
            (Direction::LowerIsBetter, true) | (Direction::HigherIsBetter, false) => Verdict::BarBetter,
            _ => Verdict::BarWorse,
        }
    };
    Ok(ComparisonRecord {
        subject: sample.subject.clone(),
        metric: sample.metric.clone(),
        p_value: test.p_value,
        direction,
        significant: test.p_value < alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub p_value: f64,
    pub baseline_total: u64,
    pub bar_total: u64,
}

/// Rank-sum test on per-subject internal-error counts, with totals.
///
/// Index `i` of both vectors belongs to the same subject.
pub fn stability_test(baseline_errors: &[u64], bar_errors: &[u64]) -> Result<StabilityResult, StatsError> {
    if baseline_errors.len() != bar_errors.len() {
        return Err(StatsError::LengthMismatch { baseline: baseline_errors.len(), bar: bar_errors.len() });
    }
    let xs: Vec<f64> = baseline_errors.iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = bar_errors.iter().map(|&v| v as f64).collect();
    let test = rank_sum_test(&xs, &ys)?;
    Ok(StabilityResult {
        p_value: test.p_value,
        baseline_total: baseline_errors.iter().sum(),
        bar_total: bar_errors.iter().sum(),
    })
}
