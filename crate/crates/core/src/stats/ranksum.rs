use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Pooled sample size up to which the exact null distribution is enumerated.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Rank sum of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Mid-ranks (1-based) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    doubled_ranks(values).into_iter().map(|r| r as f64 / 2.0).collect()
}

/// Twice the mid-ranks, which are always integers.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank (i+1 + j+1) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

fn validate(xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test.
///
/// Ties get mid-ranks. Up to [`EXACT_LIMIT`] pooled values the p-value comes
/// from the exact permutation distribution of the rank sum, otherwise from
/// the normal approximation with tie-corrected variance and a continuity
/// correction of 0.5. If all pooled values are equal the p-value is 1.
pub fn rank_sum_test(xs: &[f64], ys: &[f64]) -> Result<RankSumResult, StatsError> {
    validate(xs)?;
    validate(ys)?;
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = doubled_ranks(&pooled);
    let m = xs.len();
    let big_n = pooled.len();
    let observed: u64 = ranks[..m].iter().sum();
    let statistic = observed as f64 / 2.0;
    if big_n <= EXACT_LIMIT {
        return Ok(RankSumResult { statistic, p_value: exact_p(&ranks, m, observed), exact: true });
    }
    Ok(RankSumResult { statistic, p_value: normal_p(&pooled, &ranks, m), exact: false })
}

/// Fraction of size-`m` subsets of `ranks` whose sum is at least as far from
/// the null midpoint as `observed`.
fn exact_p(ranks: &[u64], m: usize, observed: u64) -> f64 {
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // counts[k][s]: subsets of size k with doubled-rank sum s
    let mut counts = vec![vec![0u64; width]; m + 1];
    counts[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=m).rev() {
            for s in (r..width).rev() {
                counts[k][s] += counts[k - 1][s - r];
            }
        }
    }
    // centre of the doubled sum is m(N+1); compare deviations in integers
    let centre = (m * (ranks.len() + 1)) as i64;
    let dev = (observed as i64 - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for (s, &c) in counts[m].iter().enumerate() {
        total += c;
        if (s as i64 - centre).abs() >= dev {
            extreme += c;
        }
    }
    extreme as f64 / total as f64
}

fn normal_p(pooled: &[f64], ranks: &[u64], m: usize) -> f64 {
    let big_n = pooled.len() as f64;
    let (mf, nf) = (m as f64, big_n - m as f64);
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let variance = mf * nf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let w: f64 = ranks[..m].iter().sum::<u64>() as f64 / 2.0;
    let mean = mf * (big_n + 1.0) / 2.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
