//! Black-box contract between the orchestrator and an anytime optimizer.
//!
//! An adapter launches an instance with a hard timeout and a checkpoint
//! path. The instance appends [`CheckpointRecord`](crate::checkpoint::CheckpointRecord)s
//! while it runs; after it terminates, [`harvest`] turns the file into an
//! [`InstanceReport`]. Nothing else crosses the boundary.

mod inprocess;
mod process;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointStream;
use crate::schema::MetricSchema;
use crate::surrogate::SubjectId;

pub use inprocess::{drive, DriveOptions, Execution, InProcessAdapter};
pub use process::ProcessAdapter;

/// Checkpoint period for in-process surrogates.
pub const DEFAULT_CHECKPOINT_INTERVAL_MS: u64 = 100;

/// Time an instance may overrun its timeout before it is killed.
pub const GRACE_MS: u64 = 250;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpawnFailure {
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("timeout must be positive")]
    InvalidTimeout,
    #[error("could not start instance: {0}")]
    Io(String),
}

/// How an instance ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    /// Ran until its own timeout or finished by itself.
    Completed,
    /// Overran timeout + grace and was killed by the adapter.
    TimedOut,
    /// Exited with an internal error or a non-zero status.
    Faulted,
    /// Terminated from outside before its timeout.
    Killed,
    /// Panicked or died from a signal it did not ask for.
    Crashed,
    SpawnFailed,
}

impl ExitKind {
    pub fn is_abnormal(&self) -> bool {
        !matches!(self, ExitKind::Completed | ExitKind::TimedOut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Termination {
    pub exit: ExitKind,
    /// Search time the instance lived, in the adapter's clock.
    pub lifetime_ms: u64,
}

/// A live instance, owned by exactly one [`InstanceHandle`].
pub trait RunningInstance: Send {
    /// Blocks until termination; must return within the grace period after timeout.
    fn wait(&mut self) -> Termination;
    fn kill(&mut self);
    fn is_finished(&mut self) -> bool;
}

enum Liveness {
    Running(Box<dyn RunningInstance>),
    Terminated(Termination),
}

pub struct InstanceHandle {
    subject: SubjectId,
    seed: u64,
    timeout_ms: u64,
    checkpoint: PathBuf,
    startup: Duration,
    state: Liveness,
}

impl InstanceHandle {
    pub fn running(subject: SubjectId, seed: u64, timeout_ms: u64, checkpoint: PathBuf, startup: Duration, instance: Box<dyn RunningInstance>) -> Self {
        Self { subject, seed, timeout_ms, checkpoint, startup, state: Liveness::Running(instance) }
    }

    pub fn terminated(subject: SubjectId, seed: u64, timeout_ms: u64, checkpoint: PathBuf, startup: Duration, termination: Termination) -> Self {
        Self { subject, seed, timeout_ms, checkpoint, startup, state: Liveness::Terminated(termination) }
    }

    pub fn subject(&self) -> &SubjectId {
        &self.subject
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn timeout_ms(&self) -> u64 {
        self.timeout_ms
    }

    pub fn checkpoint_path(&self) -> &Path {
        &self.checkpoint
    }

    /// Wall-clock time the adapter spent launching the instance, kept apart
    /// from the search time recorded in checkpoints.
    pub fn startup_time(&self) -> Duration {
        self.startup
    }

    pub fn is_alive(&mut self) -> bool {
        match &mut self.state {
            Liveness::Running(inst) => !inst.is_finished(),
            Liveness::Terminated(_) => false,
        }
    }

    pub fn kill(&mut self) {
        if let Liveness::Running(inst) = &mut self.state {
            inst.kill();
        }
    }

    pub fn wait(&mut self) -> Termination {
        if let Liveness::Running(inst) = &mut self.state {
            let t = inst.wait();
            self.state = Liveness::Terminated(t);
        }
        match self.state {
            Liveness::Terminated(t) => t,
            Liveness::Running(_) => unreachable!(),
        }
    }
}

/// The black-box optimizer interface.
pub trait OptimizerAdapter: Send + Sync {
    /// Metrics this adapter's instances report; starts with `fitness_score`.
    fn schema(&self) -> &MetricSchema;

    fn spawn(&self, subject: &SubjectId, seed: u64, timeout_ms: u64, checkpoint: &Path) -> Result<InstanceHandle, SpawnFailure>;
}

/// Harvested outcome of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    /// Slot among the starters (0-based).
    pub index: usize,
    pub seed: u64,
    /// Best-so-far fitness at the cutoff; absent when nothing was written.
    pub score: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub errored: bool,
    pub produced_output: bool,
    pub error_count: u32,
    pub exit: ExitKind,
    pub lifetime_ms: u64,
}

impl InstanceReport {
    /// Can be selected in the elitism phase.
    pub fn eligible(&self) -> bool {
        !self.errored && self.produced_output
    }

    pub fn spawn_failed(index: usize, seed: u64) -> Self {
        Self {
            index,
            seed,
            score: None,
            metrics: BTreeMap::new(),
            errored: true,
            produced_output: false,
            error_count: 1,
            exit: ExitKind::SpawnFailed,
            lifetime_ms: 0,
        }
    }

    /// Value of a named metric; `fitness_score` maps to [`score`](Self::score).
    pub fn metric(&self, name: &str) -> Option<f64> {
        if name == crate::schema::FITNESS_SCORE {
            self.score
        } else {
            self.metrics.get(name).copied()
        }
    }
}

/// Waits for `handle` to terminate and reads its checkpoint file.
///
/// With `cutoff = Some(d)` the last record with `elapsed <= d` is used,
/// otherwise the last record. Errors recorded anywhere in the file, an
/// abnormal exit, a corrupt stream or a header for a different instance
/// all mark the report as errored.
pub fn harvest(handle: &mut InstanceHandle, cutoff: Option<u64>) -> InstanceReport {
    let termination = handle.wait();
    let (stream, readable) = match CheckpointStream::read(handle.checkpoint_path()) {
        Ok(s) => (s, true),
        Err(_) => (CheckpointStream::default(), false),
    };
    let header_mismatch = stream
        .header
        .as_ref()
        .is_some_and(|h| h.subject != handle.subject().as_str() || h.seed != handle.seed());
    let record = stream.at_cutoff(cutoff);
    let error_count = stream.errors_until(None);
    InstanceReport {
        index: 0,
        seed: handle.seed(),
        score: record.map(|r| r.score),
        metrics: record.map(|r| r.metrics.clone()).unwrap_or_default(),
        errored: error_count > 0 || termination.exit.is_abnormal() || stream.corrupt || header_mismatch || !readable,
        produced_output: record.is_some(),
        error_count,
        exit: termination.exit,
        lifetime_ms: termination.lifetime_ms,
    }
}
