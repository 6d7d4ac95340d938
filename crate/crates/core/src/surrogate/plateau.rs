//! Synthetic anytime process with seed-dependent plateaus.
//!
//! Fitness decays from 100 toward a per-seed ceiling `q(seed)` as
//! `q + (100 − q) · exp(−r · t)`. Because the curves never cross, early
//! fitness ranks seeds exactly as their limits do.

use std::collections::BTreeMap;

use crate::rng::{mix, SplitMix64};

use super::AnytimeOptimizer;

pub const START_FITNESS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauProblem {
    /// Decay rate per second of search time.
    pub rate_per_s: f64,
    /// Identity mixed into the seed so subjects disagree on which seeds are good.
    pub salt: u64,
}

impl PlateauProblem {
    /// One of {10, 20, …, 90}.
    pub fn ceiling(&self, seed: u64) -> f64 {
        let level = SplitMix64::new(mix(seed, self.salt)).below(9) + 1;
        10.0 * level as f64
    }

    pub fn fitness_at(&self, seed: u64, elapsed_us: u64) -> f64 {
        let q = self.ceiling(seed);
        let t = elapsed_us as f64 / 1e6;
        q + (START_FITNESS - q) * (-self.rate_per_s * t).exp()
    }

    pub fn start(&self, seed: u64, step_us: u64) -> PlateauState<'_> {
        PlateauState { problem: self, seed, step_us, elapsed_us: 0, best: START_FITNESS }
    }
}

pub struct PlateauState<'a> {
    problem: &'a PlateauProblem,
    seed: u64,
    step_us: u64,
    elapsed_us: u64,
    best: f64,
}

impl AnytimeOptimizer for PlateauState<'_> {
    fn step(&mut self) {
        self.elapsed_us += self.step_us;
        let f = self.problem.fitness_at(self.seed, self.elapsed_us);
        if f < self.best {
            self.best = f;
        }
    }

    fn best_score(&self) -> f64 {
        self.best
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("coverage".to_string(), START_FITNESS - self.best)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceilings_are_discrete_levels() {
        let p = PlateauProblem { rate_per_s: 3.0, salt: 1 };
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..500 {
            let q = p.ceiling(seed);
            assert!((10.0..=90.0).contains(&q) && q % 10.0 == 0.0);
            seen.insert(q as u64);
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn trajectory_decreases_toward_ceiling() {
        let p = PlateauProblem { rate_per_s: 4.0, salt: 7 };
        let mut s = p.start(99, 10_000);
        let mut last = s.best_score();
        for _ in 0..2_000 {
            s.step();
            assert!(s.best_score() <= last);
            last = s.best_score();
        }
        assert!((last - p.ceiling(99)).abs() < 1e-6);
        let mut again = p.start(99, 10_000);
        for _ in 0..2_000 {
            again.step();
        }
        assert_eq!(again.best_score(), last);
    }
}
