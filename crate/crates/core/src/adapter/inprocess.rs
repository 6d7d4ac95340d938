use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::checkpoint::{CheckpointHeader, CheckpointRecord, CheckpointWriter};
use crate::schema::MetricSchema;
use crate::surrogate::{surrogate_schema, Subject, SubjectId};

use super::{ExitKind, InstanceHandle, OptimizerAdapter, RunningInstance, SpawnFailure, Termination, DEFAULT_CHECKPOINT_INTERVAL_MS, GRACE_MS};

/// Knobs for [`drive`].
#[derive(Debug, Clone, Default)]
pub struct DriveOptions {
    pub interval_ms: u64,
    /// Virtual milliseconds per wall-clock millisecond. `None` runs unpaced.
    pub pace: Option<f64>,
    /// Hard wall-clock deadline; the instance stops with `TimedOut` past it.
    pub wall_deadline: Option<Instant>,
    pub cancel: Option<Arc<AtomicBool>>,
}

/// Runs one surrogate instance on a virtual search clock, writing a record
/// at every multiple of the checkpoint interval until `timeout_ms`.
///
/// Time is charged per optimizer step (`subject.step_us`), so the record
/// stream is a pure function of `(subject, seed, timeout, interval)`. The
/// clock starts before initialization: no record is written before the
/// subject's init lag has passed. A faulty seed writes one record with
/// `error_count = 1` at its fault time and stops with [`ExitKind::Faulted`].
pub fn drive(subject: &Subject, seed: u64, timeout_ms: u64, writer: &mut CheckpointWriter, opts: &DriveOptions) -> io::Result<Termination> {
    let started = Instant::now();
    let interval_us = opts.interval_ms.max(1) * 1_000;
    let timeout_us = timeout_ms * 1_000;
    let lag_us = subject.init_lag_ms() * 1_000;
    let fault_us = subject.fault_at_ms(seed).map(|ms| ms * 1_000);
    let step_us = subject.step_us;

    let control = |elapsed_us: u64| -> Option<ExitKind> {
        if let Some(pace) = opts.pace {
            let target = started + Duration::from_secs_f64(elapsed_us as f64 / 1e6 / pace);
            loop {
                if let Some(stop) = interrupted(opts) {
                    return Some(stop);
                }
                let now = Instant::now();
                if now >= target {
                    break;
                }
                thread::sleep((target - now).min(Duration::from_millis(5)));
            }
        }
        interrupted(opts)
    };
    let done = |exit: ExitKind, elapsed_us: u64| Termination { exit, lifetime_ms: elapsed_us / 1_000 };

    let mut opt = subject.start(seed);
    let mut elapsed = lag_us.min(timeout_us);
    let mut next_tick = interval_us * lag_us.div_ceil(interval_us).max(1);
    let record = |elapsed_us: u64, errors: u32, opt: &dyn crate::surrogate::AnytimeOptimizer| CheckpointRecord {
        elapsed_ms: elapsed_us / 1_000,
        score: opt.best_score(),
        error_count: errors,
        metrics: opt.metrics(),
    };

    loop {
        let next_step_done = if opt.converged() { u64::MAX } else { elapsed + step_us };
        while next_tick < next_step_done && next_tick <= timeout_us && fault_us.is_none_or(|f| next_tick < f) {
            if let Some(stop) = control(next_tick) {
                return Ok(done(stop, next_tick));
            }
            writer.append(&record(next_tick, 0, opt.as_ref()))?;
            next_tick += interval_us;
        }
        if let Some(f) = fault_us.filter(|&f| f < next_step_done && f <= timeout_us) {
            if let Some(stop) = control(f) {
                return Ok(done(stop, f));
            }
            writer.append(&record(f.max(elapsed), 1, opt.as_ref()))?;
            return Ok(done(ExitKind::Faulted, f.max(elapsed)));
        }
        if next_step_done > timeout_us {
            if let Some(stop) = control(timeout_us) {
                return Ok(done(stop, timeout_us));
            }
            return Ok(done(ExitKind::Completed, timeout_us));
        }
        if let Some(stop) = control(elapsed) {
            return Ok(done(stop, elapsed));
        }
        opt.step();
        elapsed = next_step_done;
    }
}

fn interrupted(opts: &DriveOptions) -> Option<ExitKind> {
    if opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
        return Some(ExitKind::Killed);
    }
    if opts.wall_deadline.is_some_and(|d| Instant::now() > d) {
        return Some(ExitKind::TimedOut);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Each instance runs on its own thread; `spawn` returns immediately.
    #[default]
    Threaded,
    /// `spawn` runs the instance to completion before returning.
    Inline,
}

/// Adapter for the built-in surrogate subjects.
pub struct InProcessAdapter {
    subjects: BTreeMap<SubjectId, Arc<Subject>>,
    schema: MetricSchema,
    interval_ms: u64,
    pace: Option<f64>,
    execution: Execution,
}

impl InProcessAdapter {
    pub fn new(subjects: impl IntoIterator<Item = Subject>) -> Self {
        Self {
            subjects: subjects.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect(),
            schema: surrogate_schema(),
            interval_ms: DEFAULT_CHECKPOINT_INTERVAL_MS,
            pace: None,
            execution: Execution::Threaded,
        }
    }

    pub fn with_interval_ms(mut self, interval_ms: u64) -> Self {
        self.interval_ms = interval_ms.max(1);
        self
    }

    /// Ties virtual search time to the wall clock (`1.0` = real time).
    pub fn with_pace(mut self, pace: f64) -> Self {
        self.pace = Some(pace);
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn subject(&self, id: &SubjectId) -> Option<&Subject> {
        self.subjects.get(id).map(|s| s.as_ref())
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = &SubjectId> {
        self.subjects.keys()
    }
}

struct ThreadInstance {
    join: Option<JoinHandle<io::Result<Termination>>>,
    cancel: Arc<AtomicBool>,
    result: Option<Termination>,
}

impl RunningInstance for ThreadInstance {
    fn wait(&mut self) -> Termination {
        if let Some(join) = self.join.take() {
            let t = match join.join() {
                Ok(Ok(t)) => t,
                Ok(Err(_)) => Termination { exit: ExitKind::Faulted, lifetime_ms: 0 },
                Err(_) => Termination { exit: ExitKind::Crashed, lifetime_ms: 0 },
            };
            self.result = Some(t);
        }
        self.result.expect("joined instance has a result")
    }

    fn kill(&mut self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    fn is_finished(&mut self) -> bool {
        self.join.as_ref().is_none_or(|j| j.is_finished())
    }
}

impl OptimizerAdapter for InProcessAdapter {
    fn schema(&self) -> &MetricSchema {
        &self.schema
    }

    fn spawn(&self, subject: &SubjectId, seed: u64, timeout_ms: u64, checkpoint: &Path) -> Result<InstanceHandle, SpawnFailure> {
        let launched = Instant::now();
        let spec = self.subjects.get(subject).cloned().ok_or_else(|| SpawnFailure::UnknownSubject(subject.to_string()))?;
        if timeout_ms == 0 {
            return Err(SpawnFailure::InvalidTimeout);
        }
        let header = CheckpointHeader { subject: subject.to_string(), seed, schema: self.schema.clone() };
        let mut writer = CheckpointWriter::create(checkpoint, &header).map_err(|e| SpawnFailure::Io(e.to_string()))?;
        let cancel = Arc::new(AtomicBool::new(false));
        let opts = DriveOptions {
            interval_ms: self.interval_ms,
            pace: self.pace,
            wall_deadline: Some(launched + Duration::from_millis(timeout_ms + GRACE_MS)),
            cancel: Some(Arc::clone(&cancel)),
        };
        let path = checkpoint.to_path_buf();
        match self.execution {
            Execution::Inline => {
                let startup = launched.elapsed();
                let t = drive(&spec, seed, timeout_ms, &mut writer, &opts)
                    .unwrap_or(Termination { exit: ExitKind::Faulted, lifetime_ms: 0 });
                Ok(InstanceHandle::terminated(subject.clone(), seed, timeout_ms, path, startup, t))
            }
            Execution::Threaded => {
                let join = thread::Builder::new()
                    .name(format!("{subject}-{seed:x}"))
                    .spawn(move || drive(&spec, seed, timeout_ms, &mut writer, &opts))
                    .map_err(|e| SpawnFailure::Io(e.to_string()))?;
                let instance = ThreadInstance { join: Some(join), cancel, result: None };
                Ok(InstanceHandle::running(subject.clone(), seed, timeout_ms, path, launched.elapsed(), Box::new(instance)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::harvest;
    use crate::checkpoint::CheckpointStream;
    use crate::surrogate::{FaultInjection, LaggedCoverageProblem, PlateauProblem, Problem};
    use crate::rng::SplitMix64;

    fn plateau(id: &str) -> Subject {
        Subject::new(id, Problem::Plateau(PlateauProblem { rate_per_s: 3.0, salt: 5 }), 10_000)
    }

    fn lagged(id: &str, lag_ms: u64) -> Subject {
        let mut rng = SplitMix64::new(1);
        Subject::new(id, Problem::Lagged(LaggedCoverageProblem::generate(50, lag_ms, 0.3, 1, 0.01, &mut rng).unwrap()), 10_000)
    }

    #[test]
    fn records_land_on_the_interval_grid() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([plateau("p")]);
        let path = dir.path().join("a.ckpt");
        let mut h = adapter.spawn(&"p".into(), 42, 1_000, &path).unwrap();
        assert!(path.exists());
        let r = harvest(&mut h, None);
        assert!(r.eligible());
        assert_eq!(r.lifetime_ms, 1_000);
        let s = CheckpointStream::read(&path).unwrap();
        let elapsed: Vec<u64> = s.records.iter().map(|r| r.elapsed_ms).collect();
        assert_eq!(elapsed, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
        assert!(s.records.windows(2).all(|w| w[1].score <= w[0].score));
    }

    #[test]
    fn lag_longer_than_timeout_leaves_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([lagged("l", 5_000)]);
        let path = dir.path().join("l.ckpt");
        let mut h = adapter.spawn(&"l".into(), 3, 3_000, &path).unwrap();
        let r = harvest(&mut h, Some(3_000));
        assert!(!r.produced_output && !r.errored);
        assert_eq!(r.lifetime_ms, 3_000);
        assert!(CheckpointStream::read(&path).unwrap().records.is_empty());
    }

    #[test]
    fn first_record_waits_for_lag_rounded_to_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([lagged("l", 50)]);
        let path = dir.path().join("l.ckpt");
        let mut h = adapter.spawn(&"l".into(), 3, 1_000, &path).unwrap();
        harvest(&mut h, None);
        let s = CheckpointStream::read(&path).unwrap();
        assert_eq!(s.records[0].elapsed_ms, 100);
    }

    #[test]
    fn unknown_subject_and_zero_timeout_fail_to_spawn() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([plateau("p")]);
        assert_eq!(adapter.spawn(&"q".into(), 1, 10, &dir.path().join("x")).err(), Some(SpawnFailure::UnknownSubject("q".into())));
        assert_eq!(adapter.spawn(&"p".into(), 1, 0, &dir.path().join("x")).err(), Some(SpawnFailure::InvalidTimeout));
    }

    #[test]
    fn faulty_seed_writes_an_error_record() {
        let dir = tempfile::tempdir().unwrap();
        let subject = plateau("p").with_fault(FaultInjection { rate: 1.0, window_ms: 300 });
        let at = subject.fault_at_ms(9).unwrap();
        let adapter = InProcessAdapter::new([subject]).with_execution(Execution::Inline);
        let mut h = adapter.spawn(&"p".into(), 9, 2_000, &dir.path().join("f.ckpt")).unwrap();
        let r = harvest(&mut h, None);
        assert_eq!(r.exit, ExitKind::Faulted);
        assert!(r.errored);
        assert_eq!(r.error_count, 1);
        assert_eq!(r.lifetime_ms, at);
    }

    #[test]
    fn killing_a_paced_instance_mid_run() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([plateau("p")]).with_pace(1.0);
        let path = dir.path().join("k.ckpt");
        let mut h = adapter.spawn(&"p".into(), 4, 5_000, &path).unwrap();
        thread::sleep(Duration::from_millis(350));
        assert!(h.is_alive());
        h.kill();
        let r = harvest(&mut h, None);
        assert_eq!(r.exit, ExitKind::Killed);
        assert!(r.errored);
        assert!(r.produced_output, "records written before the kill survive");
        assert!(r.score.is_some());
        assert!(r.lifetime_ms < 5_000);
    }

    #[test]
    fn paced_instance_respects_wall_clock_bound() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = InProcessAdapter::new([plateau("p")]).with_pace(1.0);
        let start = Instant::now();
        let mut h = adapter.spawn(&"p".into(), 4, 300, &dir.path().join("w.ckpt")).unwrap();
        let r = harvest(&mut h, None);
        let wall = start.elapsed();
        assert_eq!(r.exit, ExitKind::Completed);
        assert!(wall >= Duration::from_millis(280), "{wall:?}");
        assert!(wall <= Duration::from_millis(300 + GRACE_MS), "{wall:?}");
    }

    #[test]
    fn checkpoint_stream_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SplitMix64::new(8);
        let subjects = vec![
            Subject::new("m", Problem::Mvc(crate::surrogate::MvcProblem {
                graph: crate::surrogate::Graph::random(15, 0.3, &mut rng),
                population: 20,
                mutation_rate: 0.05,
                elite: 2,
            }), 5_000),
            Subject::new("t", Problem::Tsp(crate::surrogate::TspProblem::random(20, &mut rng)), 2_000),
            lagged("l", 50),
            plateau("p"),
        ];
        let adapter = InProcessAdapter::new(subjects);
        for id in ["m", "t", "l", "p"] {
            let a = dir.path().join(format!("{id}-a"));
            let b = dir.path().join(format!("{id}-b"));
            harvest(&mut adapter.spawn(&id.into(), 77, 1_500, &a).unwrap(), None);
            harvest(&mut adapter.spawn(&id.into(), 77, 1_500, &b).unwrap(), None);
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{id}");
        }
    }
}
