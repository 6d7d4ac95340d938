//! The four phases of one Bet-and-Run execution.
//!
//! 1. start `n` instances with distinct seeds and timeout `t_k`;
//! 2. harvest each at `t_k`;
//! 3. keep the eligible instance with the lowest fitness (first index wins ties);
//! 4. restart that instance from scratch, same seed, for the survivor timeout.
//!
//! The baseline `RESTARTS^1_100%` stops after phase 2.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::{harvest, InstanceReport, OptimizerAdapter};
use crate::budget::{plan_budget, survivor_timeout, BudgetError, BudgetMode, BudgetPlan, RestartStrategy};
use crate::rng::SeedSource;
use crate::surrogate::SubjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Failure {
    None,
    NoViableCandidate,
    SurvivorErrored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub subject: SubjectId,
    pub strategy: RestartStrategy,
    pub mode: BudgetMode,
    pub plan: BudgetPlan,
    pub starters: Vec<InstanceReport>,
    pub survivor_index: Option<usize>,
    pub final_report: Option<InstanceReport>,
    pub failure: Failure,
    /// Budget charged against `t_total`: `n·t_k`, plus the survivor timeout if it ran.
    pub charged_budget: u64,
}

impl RunOutcome {
    pub fn survivor_seed(&self) -> Option<u64> {
        self.survivor_index.map(|i| self.starters[i].seed)
    }

    /// The survivor was restarted for a run phase.
    pub fn survivor_ran(&self) -> bool {
        !self.strategy.is_baseline() && self.survivor_index.is_some() && survivor_timeout(&self.plan, self.mode) > 0
    }

    /// Final report usable for statistics: present, no failure, has a score.
    pub fn usable_final(&self) -> Option<&InstanceReport> {
        self.final_report.as_ref().filter(|f| self.failure == Failure::None && f.produced_output && !f.errored)
    }

    /// Internal errors attributed to this run: those of the instance that
    /// delivered the result, or of all starters when none could be chosen.
    pub fn error_count(&self) -> u32 {
        match (&self.final_report, self.failure) {
            (_, Failure::NoViableCandidate) if !self.strategy.is_baseline() => self.starters.iter().map(|s| s.error_count).sum(),
            (Some(f), _) => f.error_count,
            (None, _) => self.starters.iter().map(|s| s.error_count).sum(),
        }
    }

    /// Internal errors of every instance started, including discarded starters.
    pub fn total_instance_errors(&self) -> u32 {
        let survivor = if self.survivor_ran() { self.final_report.as_ref().map_or(0, |f| f.error_count) } else { 0 };
        self.starters.iter().map(|s| s.error_count).sum::<u32>() + survivor
    }
}

/// Parameters of one Bet-and-Run execution.
#[derive(Debug, Clone)]
pub struct RunRequest<'a> {
    pub subject: &'a SubjectId,
    pub strategy: RestartStrategy,
    pub t_total: u64,
    pub mode: BudgetMode,
    pub seeds: SeedSource,
    pub repetition: u32,
    /// Directory for this run's checkpoint files; must not be shared with a concurrent run.
    pub workdir: &'a Path,
    /// Delete checkpoint files once harvested.
    pub cleanup: bool,
}

/// Index of the first eligible starter with the minimum score.
pub fn select_survivor(starters: &[InstanceReport]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in starters.iter().enumerate() {
        if !r.eligible() {
            continue;
        }
        let Some(score) = r.score else { continue };
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

pub fn run_bet_and_run(req: &RunRequest<'_>, adapter: &dyn OptimizerAdapter) -> Result<RunOutcome, BudgetError> {
    let plan = plan_budget(req.strategy, req.t_total)?;
    let n = req.strategy.n();
    let seeds = req.seeds.seeds(req.subject.as_str(), req.repetition, n);
    let label = req.strategy.label();
    let path = |name: String| req.workdir.join(format!("{}-{label}-r{}-{name}.ckpt", req.subject, req.repetition));

    // phase (i): start all instances, phase (ii): harvest at t_k
    let mut handles = Vec::with_capacity(n as usize);
    for (slot, &seed) in seeds.iter().enumerate() {
        let p = path(format!("s{slot}"));
        handles.push((seed, p.clone(), adapter.spawn(req.subject, seed, plan.t_k, &p)));
    }
    let mut starters = Vec::with_capacity(n as usize);
    for (slot, (seed, p, spawned)) in handles.into_iter().enumerate() {
        let report = match spawned {
            Ok(mut h) => {
                let mut r = harvest(&mut h, Some(plan.t_k));
                r.index = slot;
                r
            }
            Err(_) => InstanceReport::spawn_failed(slot, seed),
        };
        if req.cleanup {
            let _ = fs::remove_file(&p);
        }
        starters.push(report);
    }

    // phase (iii)
    let survivor_index = select_survivor(&starters);
    let starting = plan.starting_budget(n);
    let mut outcome = RunOutcome {
        subject: req.subject.clone(),
        strategy: req.strategy,
        mode: req.mode,
        plan,
        starters,
        survivor_index,
        final_report: None,
        failure: if survivor_index.is_some() { Failure::None } else { Failure::NoViableCandidate },
        charged_budget: starting,
    };

    if req.strategy.is_baseline() {
        outcome.final_report = outcome.starters.first().cloned();
        return Ok(outcome);
    }
    let Some(i) = survivor_index else { return Ok(outcome) };

    // phase (iv): full restart of the survivor with the same seed
    let timeout = survivor_timeout(&plan, req.mode);
    if timeout == 0 {
        // no time left for a restart; the evaluated output is the result
        outcome.final_report = Some(outcome.starters[i].clone());
        return Ok(outcome);
    }
    let seed = outcome.starters[i].seed;
    let p = path("survivor".into());
    let mut report = match adapter.spawn(req.subject, seed, timeout, &p) {
        Ok(mut h) => harvest(&mut h, None),
        Err(_) => InstanceReport::spawn_failed(i, seed),
    };
    if req.cleanup {
        let _ = fs::remove_file(&p);
    }
    report.index = i;
    if report.errored {
        outcome.failure = Failure::SurvivorErrored;
    }
    outcome.final_report = Some(report);
    outcome.charged_budget = starting + timeout;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseEvent {
    StartPhase { at_ms: u64, instances: u32, timeout_ms: u64 },
    Evaluation { at_ms: u64, eligible: usize },
    Elitism { at_ms: u64, survivor: Option<usize> },
    /// `elapsed_ms` is the survivor's actual lifetime, which may be shorter than the timeout.
    RunPhase { at_ms: u64, timeout_ms: u64, elapsed_ms: u64 },
}

/// Phase events on the charged-budget timeline.
pub fn phase_log(outcome: &RunOutcome) -> Vec<PhaseEvent> {
    let n = outcome.strategy.n();
    let t_k = outcome.plan.t_k;
    let evaluated = outcome.plan.starting_budget(n);
    let mut events = vec![
        PhaseEvent::StartPhase { at_ms: 0, instances: n, timeout_ms: t_k },
        PhaseEvent::Evaluation { at_ms: evaluated, eligible: outcome.starters.iter().filter(|s| s.eligible()).count() },
    ];
    if outcome.strategy.is_baseline() {
        return events;
    }
    events.push(PhaseEvent::Elitism { at_ms: evaluated, survivor: outcome.survivor_index });
    if outcome.survivor_ran() {
        events.push(PhaseEvent::RunPhase {
            at_ms: evaluated,
            timeout_ms: survivor_timeout(&outcome.plan, outcome.mode),
            elapsed_ms: outcome.final_report.as_ref().map_or(0, |f| f.lifetime_ms),
        });
    }
    events
}
