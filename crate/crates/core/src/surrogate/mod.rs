//! Seeded in-process optimizers that stand in for a real test generator.
//!
//! Four families cover the regimes a restart strategy has to cope with:
//! a GA on minimum vertex cover, 2-opt on Euclidean TSP, a synthetic
//! process with seed-dependent plateaus, and a coverage process whose
//! first output only appears after an initialization lag.

pub mod lagged;
pub mod mvc;
pub mod plateau;
pub mod suite;
pub mod tsp;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{hash_str, mix, SplitMix64};
use crate::schema::{Direction, MetricSchema};

pub use lagged::LaggedCoverageProblem;
pub use mvc::{Graph, MvcProblem};
pub use plateau::PlateauProblem;
pub use suite::{make_subject_suite, SuiteSpec, DEFAULT_SUITE};
pub use tsp::TspProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubjectError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("suite line {line}: {message}")]
    Suite { line: usize, message: String },
    #[error("subject {0} is too large for exhaustive search")]
    SubjectTooLarge(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for SubjectId {
    fn from(s: String) -> Self {
        SubjectId(s)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_string())
    }
}

/// One iteration-at-a-time anytime optimizer with a best-so-far archive.
pub trait AnytimeOptimizer {
    /// Advances one generation or move. Must never worsen [`best_score`](Self::best_score).
    fn step(&mut self);

    /// Best-so-far fitness, lower is better.
    fn best_score(&self) -> f64;

    /// Additional metrics of the best-so-far solution.
    fn metrics(&self) -> BTreeMap<String, f64>;

    /// Nothing left to improve; the driver may fast-forward time.
    fn converged(&self) -> bool {
        false
    }
}

/// Seed-deterministic transient tool errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    /// Probability that a given seed is faulty.
    pub rate: f64,
    /// Faulty instances fail within this many milliseconds after initialization.
    pub window_ms: u64,
}

impl Default for FaultInjection {
    fn default() -> Self {
        Self { rate: 0.18, window_ms: 400 }
    }
}

impl FaultInjection {
    pub const NONE: FaultInjection = FaultInjection { rate: 0.0, window_ms: 0 };

    /// Elapsed time at which `seed` fails on `subject`, if it is faulty.
    pub fn fault_at_ms(&self, subject: &SubjectId, seed: u64, lag_ms: u64) -> Option<u64> {
        if self.rate <= 0.0 {
            return None;
        }
        let mut r = SplitMix64::new(mix(seed, hash_str(subject.as_str()) ^ hash_str("fault-injection")));
        if r.next_f64() < self.rate {
            Some(lag_ms + r.below(self.window_ms + 1))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mvc,
    Tsp,
    Plateau,
    Lagged,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mvc, Family::Tsp, Family::Plateau, Family::Lagged];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Mvc => "mvc",
            Family::Tsp => "tsp",
            Family::Plateau => "plateau",
            Family::Lagged => "lagged",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Mvc(MvcProblem),
    Tsp(TspProblem),
    Plateau(PlateauProblem),
    Lagged(LaggedCoverageProblem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: SubjectId,
    pub problem: Problem,
    /// Virtual search time charged per optimizer step, in microseconds.
    pub step_us: u64,
    pub fault: FaultInjection,
}

impl Subject {
    pub fn new(id: impl Into<String>, problem: Problem, step_us: u64) -> Self {
        Self { id: SubjectId(id.into()), problem, step_us: step_us.max(1), fault: FaultInjection::NONE }
    }

    pub fn with_fault(mut self, fault: FaultInjection) -> Self {
        self.fault = fault;
        self
    }

    pub fn family(&self) -> Family {
        match self.problem {
            Problem::Mvc(_) => Family::Mvc,
            Problem::Tsp(_) => Family::Tsp,
            Problem::Plateau(_) => Family::Plateau,
            Problem::Lagged(_) => Family::Lagged,
        }
    }

    pub fn init_lag_ms(&self) -> u64 {
        match &self.problem {
            Problem::Lagged(p) => p.lag_ms,
            _ => 0,
        }
    }

    pub fn fault_at_ms(&self, seed: u64) -> Option<u64> {
        self.fault.fault_at_ms(&self.id, seed, self.init_lag_ms())
    }

    pub fn start(&self, seed: u64) -> Box<dyn AnytimeOptimizer + '_> {
        match &self.problem {
            Problem::Mvc(p) => Box::new(p.start(seed)),
            Problem::Tsp(p) => Box::new(p.start(seed)),
            Problem::Plateau(p) => Box::new(p.start(seed, self.step_us)),
            Problem::Lagged(p) => Box::new(p.start(seed)),
        }
    }

    /// Exact optimum: brute force for MVC (≤ 20 vertices) and TSP (≤ 10
    /// cities); the lowest ceiling for plateau subjects; zero uncovered
    /// targets for coverage subjects.
    pub fn reference_optimum(&self) -> Result<f64, SubjectError> {
        let too_large = || SubjectError::SubjectTooLarge(self.id.to_string());
        match &self.problem {
            Problem::Mvc(p) if p.graph.vertices() <= 20 => p.brute_force_optimum().map(|v| v as f64).ok_or_else(too_large),
            Problem::Tsp(p) if p.len() <= 10 => p.brute_force_optimum().ok_or_else(too_large),
            Problem::Mvc(_) | Problem::Tsp(_) => Err(too_large()),
            Problem::Plateau(_) => Ok(10.0),
            Problem::Lagged(_) => Ok(0.0),
        }
    }
}

/// Metrics reported by every surrogate family (not every family emits all of them).
pub fn surrogate_schema() -> MetricSchema {
    MetricSchema::new([("coverage", Direction::HigherIsBetter), ("solution_size", Direction::LowerIsBetter)])
        .expect("static schema is valid")
}

/// Small named fixtures used by the oracle command and tests.
pub fn fixture(name: &str) -> Option<Subject> {
    let problem = match name {
        "k3" => Problem::Mvc(MvcProblem { graph: Graph::complete(3), population: 20, mutation_rate: 0.1, elite: 2 }),
        "unit-square" => Problem::Tsp(TspProblem::unit_square()),
        _ => return None,
    };
    Some(Subject::new(name, problem, 1_000))
}
