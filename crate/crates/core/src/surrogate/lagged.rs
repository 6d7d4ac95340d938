//! Coverage-style surrogate with nested targets and an initialization lag.
//!
//! Targets form a forest: a target can only be covered once its parent is
//! covered. Covered targets stay covered, so the score (uncovered targets)
//! never increases. Most targets are easy; a few `hard` leaves have a tiny
//! per-step probability and dominate the final score independently of how
//! quickly the easy part was covered.

use std::collections::BTreeMap;

use crate::rng::SplitMix64;

use super::{AnytimeOptimizer, SubjectError};

#[derive(Debug, Clone, PartialEq)]
pub struct LaggedCoverageProblem {
    parents: Vec<Option<usize>>,
    probabilities: Vec<f64>,
    /// Search time before the first checkpoint can be written.
    pub lag_ms: u64,
}

impl LaggedCoverageProblem {
    /// Random forest of `targets` nodes; the `hard` deepest-numbered targets
    /// use `hard_prob`, the rest `cover_prob`.
    pub fn generate(
        targets: usize,
        lag_ms: u64,
        cover_prob: f64,
        hard: usize,
        hard_prob: f64,
        rng: &mut SplitMix64,
    ) -> Result<Self, SubjectError> {
        if targets == 0 {
            return Err(SubjectError::InvalidParameter("targets must be at least 1".into()));
        }
        if hard > targets {
            return Err(SubjectError::InvalidParameter(format!("hard = {hard} exceeds targets = {targets}")));
        }
        for p in [cover_prob, hard_prob] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SubjectError::InvalidParameter(format!("coverage probability {p} outside (0, 1]")));
            }
        }
        let roots = (targets / 10).max(1);
        let parents = (0..targets).map(|i| if i < roots { None } else { Some(rng.index(i)) }).collect();
        let probabilities = (0..targets).map(|i| if i >= targets - hard { hard_prob } else { cover_prob }).collect();
        Ok(Self { parents, probabilities, lag_ms })
    }

    pub fn targets(&self) -> usize {
        self.parents.len()
    }

    pub fn start(&self, seed: u64) -> LaggedState<'_> {
        LaggedState { problem: self, rng: SplitMix64::stream(seed, "lagged-coverage"), covered: vec![false; self.targets()], count: 0 }
    }
}

pub struct LaggedState<'a> {
    problem: &'a LaggedCoverageProblem,
    rng: SplitMix64,
    covered: Vec<bool>,
    count: usize,
}

impl LaggedState<'_> {
    pub fn covered(&self) -> usize {
        self.count
    }
}

impl AnytimeOptimizer for LaggedState<'_> {
    fn step(&mut self) {
        let p = self.problem;
        // only targets reachable at the start of the step are attempted
        let reachable: Vec<usize> = (0..p.targets())
            .filter(|&i| !self.covered[i] && p.parents[i].is_none_or(|parent| self.covered[parent]))
            .collect();
        for i in reachable {
            if self.rng.chance(p.probabilities[i]) {
                self.covered[i] = true;
                self.count += 1;
            }
        }
    }

    fn best_score(&self) -> f64 {
        (self.problem.targets() - self.count) as f64
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        let coverage = 100.0 * self.count as f64 / self.problem.targets() as f64;
        BTreeMap::from([("coverage".to_string(), coverage)])
    }

    fn converged(&self) -> bool {
        self.count == self.problem.targets()
    }
}
