//! Subjects × strategies × repetitions under a bounded worker pool.

mod config;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::OptimizerAdapter;
use crate::budget::{BudgetError, RestartStrategy};
use crate::orchestrator::{phase_log, run_bet_and_run, Failure, PhaseEvent, RunOutcome, RunRequest};
use crate::rng::SeedSource;
use crate::surrogate::{SubjectError, SubjectId};

pub use config::{default_workers, CampaignConfig, WORKERS_ENV};
pub use store::{timing_path, RecordFile, RecordHeader, RecordSink};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error("{0}")]
    Io(String),
    #[error("bad record file: {0}")]
    BadRecordFile(String),
    #[error("record file belongs to a different campaign (fingerprint {found}, expected {expected})")]
    FingerprintMismatch { found: String, expected: String },
    #[error("incomplete records: {0}")]
    Incomplete(String),
}

/// One finished (subject, strategy, repetition) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub subject: SubjectId,
    pub strategy: RestartStrategy,
    pub repetition: u32,
    pub survivor_seed: Option<u64>,
    pub error_count: u32,
    pub outcome: RunOutcome,
    pub phases: Vec<PhaseEvent>,
}

impl CampaignRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// The run errored or produced no usable result.
    pub fn is_bad(&self) -> bool {
        self.error_count > 0 || self.outcome.failure != Failure::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Task {
    subject: usize,
    strategy: usize,
    repetition: u32,
}

fn tasks(subjects: usize, strategies: usize, reps: u32) -> Vec<Task> {
    let mut out = Vec::with_capacity(subjects * strategies * reps as usize);
    for subject in 0..subjects {
        for strategy in 0..strategies {
            for repetition in 0..reps {
                out.push(Task { subject, strategy, repetition });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    /// Directory for checkpoint files; a fresh temporary directory if unset.
    pub scratch: Option<PathBuf>,
    /// Stop after writing this many new records (for interruption tests).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub records: Vec<CampaignRecord>,
    /// Records already present in the file before this invocation.
    pub resumed: usize,
    pub complete: bool,
}

impl CampaignSummary {
    /// Runs that ended without a usable result.
    pub fn failed_runs(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.failure != Failure::None).count()
    }
}

fn run_task(config: &CampaignConfig, subjects: &[SubjectId], task: Task, adapter: &dyn OptimizerAdapter, scratch: &Path) -> Result<CampaignRecord, CampaignError> {
    let subject = &subjects[task.subject];
    let strategy = config.strategies[task.strategy];
    let request = RunRequest {
        subject,
        strategy,
        t_total: config.t_total_ms,
        mode: config.mode,
        seeds: SeedSource::new(config.master_seed),
        repetition: task.repetition,
        workdir: scratch,
        cleanup: true,
    };
    let outcome = run_bet_and_run(&request, adapter)?;
    Ok(CampaignRecord {
        subject: subject.clone(),
        strategy,
        repetition: task.repetition,
        survivor_seed: outcome.survivor_seed(),
        error_count: outcome.error_count(),
        phases: phase_log(&outcome),
        outcome,
    })
}

/// Runs every missing triple of `config` and appends it to `out`.
///
/// Records are written in canonical order (subject, strategy, repetition),
/// so the file content does not depend on the worker count. An existing
/// file from the same configuration is resumed: its complete records are
/// kept byte for byte and only the remaining triples are executed.
pub fn run_campaign(config: &CampaignConfig, adapter: &dyn OptimizerAdapter, out: &Path, opts: &CampaignOptions) -> Result<CampaignSummary, CampaignError> {
    config.validate()?;
    let subjects = config.subject_ids()?;
    let all = tasks(subjects.len(), config.strategies.len(), config.repetitions);
    let header = RecordHeader { fingerprint: config.fingerprint(), schema: adapter.schema().clone() };

    let existing = if out.exists() { Some(RecordFile::read(out)?) } else { None };
    let mut records = Vec::with_capacity(all.len());
    if let Some(file) = &existing {
        if file.header.fingerprint != header.fingerprint {
            return Err(CampaignError::FingerprintMismatch { found: file.header.fingerprint.clone(), expected: header.fingerprint.clone() });
        }
        for (task, r) in all.iter().zip(&file.records) {
            let matches = r.subject == subjects[task.subject] && r.strategy == config.strategies[task.strategy] && r.repetition == task.repetition;
            if !matches {
                break;
            }
            records.push(r.clone());
        }
    }
    let resumed = records.len();
    let mut sink = RecordSink::open(out, &header, existing.as_ref().map(|f| (f, resumed)))?;

    let pending = &all[resumed..];
    let limit = opts.stop_after.map_or(pending.len(), |n| n.min(pending.len()));
    let pending = &pending[..limit];

    let temp;
    let scratch = match &opts.scratch {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CampaignError::Io(format!("{}: {e}", dir.display())))?;
            dir.as_path()
        }
        None => {
            temp = TempDir::new()?;
            temp.path()
        }
    };

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<CampaignRecord, CampaignError>, u64)>();
    let workers = config.workers.min(pending.len()).max(1);
    let outcome = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, subjects) = (&next, &abort, &subjects);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&task) = pending.get(i) else { break };
                let started = Instant::now();
                let result = run_task(config, subjects, task, adapter, scratch);
                if tx.send((i, result, started.elapsed().as_millis() as u64)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // single writer: flush the contiguous prefix in canonical order
        let mut buffered = BTreeMap::new();
        let mut written = 0;
        for (i, result, wall) in rx {
            match result {
                Ok(r) => {
                    buffered.insert(i, (r, wall));
                }
                Err(e) => {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
            }
            while let Some((r, wall)) = buffered.remove(&written) {
                if let Err(e) = sink.append(&r, wall) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                records.push(r);
                written += 1;
            }
        }
        Ok(())
    });
    outcome?;
    let complete = records.len() == all.len();
    Ok(CampaignSummary { records, resumed, complete })
}

/// Scratch directory removed on drop.
struct TempDir(PathBuf);

impl TempDir {
    fn new() -> Result<Self, CampaignError> {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let name = format!("betrun-{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed));
        let dir = std::env::temp_dir().join(name);
        fs::create_dir_all(&dir).map_err(|e| CampaignError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self(dir))
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EligibilityReason {
    Eligible,
    BaselineErrors,
    BarErrors,
    BothErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityVerdict {
    pub subject: SubjectId,
    pub eligible_for_baseline: bool,
    pub eligible_for_bar: bool,
    pub reason: EligibilityReason,
    pub baseline_bad_runs: usize,
    pub baseline_runs: usize,
    pub bar_bad_runs: usize,
    pub bar_runs: usize,
}

impl EligibilityVerdict {
    pub fn eligible(&self) -> bool {
        self.eligible_for_baseline && self.eligible_for_bar
    }
}

/// Judges each subject under `baseline` and `bar`.
///
/// A side is ineligible when the fraction of its runs that errored or
/// produced no result exceeds `theta`. Every subject must have records
/// for both strategies.
pub fn filter_eligibility(records: &[CampaignRecord], baseline: RestartStrategy, bar: RestartStrategy, theta: f64) -> Result<Vec<EligibilityVerdict>, CampaignError> {
    let mut counts: BTreeMap<&SubjectId, [(usize, usize); 2]> = BTreeMap::new();
    for r in records {
        let side = if r.strategy == baseline {
            0
        } else if r.strategy == bar {
            1
        } else {
            continue;
        };
        let c = &mut counts.entry(&r.subject).or_default()[side];
        c.0 += r.is_bad() as usize;
        c.1 += 1;
    }
    let mut out = Vec::with_capacity(counts.len());
    for (subject, [(bb, bn), (rb, rn)]) in counts {
        if bn == 0 || rn == 0 {
            let missing = if bn == 0 { baseline } else { bar };
            return Err(CampaignError::Incomplete(format!("subject {subject} has no records for {missing}")));
        }
        let ok_base = bb as f64 / bn as f64 <= theta;
        let ok_bar = rb as f64 / rn as f64 <= theta;
        let reason = match (ok_base, ok_bar) {
            (true, true) => EligibilityReason::Eligible,
            (false, true) => EligibilityReason::BaselineErrors,
            (true, false) => EligibilityReason::BarErrors,
            (false, false) => EligibilityReason::BothErrors,
        };
        out.push(EligibilityVerdict {
            subject: subject.clone(),
            eligible_for_baseline: ok_base,
            eligible_for_bar: ok_bar,
            reason,
            baseline_bad_runs: bb,
            baseline_runs: bn,
            bar_bad_runs: rb,
            bar_runs: rn,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub strategy: RestartStrategy,
    pub total_errors: u64,
    pub runs: usize,
    /// Runs with at least one internal error.
    pub errored_runs: usize,
}

impl ErrorTally {
    pub fn errors_per_run(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.total_errors as f64 / self.runs as f64
        }
    }

    pub fn error_run_fraction(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.errored_runs as f64 / self.runs as f64
        }
    }
}

/// Internal-error totals per strategy, in order of first appearance.
pub fn error_tally(records: &[CampaignRecord]) -> Vec<ErrorTally> {
    let mut out: Vec<ErrorTally> = Vec::new();
    for r in records {
        let pos = match out.iter().position(|t| t.strategy == r.strategy) {
            Some(p) => p,
            None => {
                out.push(ErrorTally { strategy: r.strategy, total_errors: 0, runs: 0, errored_runs: 0 });
                out.len() - 1
            }
        };
        let t = &mut out[pos];
        t.total_errors += u64::from(r.error_count);
        t.runs += 1;
        t.errored_runs += (r.error_count > 0) as usize;
    }
    out
}

/// Summed run error counts per subject for one strategy, restricted to `subjects`.
pub fn errors_by_subject(records: &[CampaignRecord], strategy: RestartStrategy, subjects: &BTreeSet<SubjectId>) -> BTreeMap<SubjectId, u64> {
    let mut out: BTreeMap<SubjectId, u64> = subjects.iter().map(|s| (s.clone(), 0)).collect();
    for r in records.iter().filter(|r| r.strategy == strategy) {
        if let Some(v) = out.get_mut(&r.subject) {
            *v += u64::from(r.error_count);
        }
    }
    out
}
