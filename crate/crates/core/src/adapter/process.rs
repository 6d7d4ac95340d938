use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::schema::MetricSchema;
use crate::surrogate::SubjectId;

use super::{ExitKind, InstanceHandle, OptimizerAdapter, RunningInstance, SpawnFailure, Termination, GRACE_MS};

/// Runs each instance as a child process.
///
/// Arguments may contain the placeholders `{subject}`, `{seed}`,
/// `{timeout_ms}` and `{checkpoint}`. The child is expected to stop by
/// itself at its timeout; it is killed `GRACE_MS` later if it has not.
pub struct ProcessAdapter {
    program: PathBuf,
    args: Vec<String>,
    schema: MetricSchema,
    subjects: Option<BTreeSet<SubjectId>>,
    grace: Duration,
}

impl ProcessAdapter {
    pub fn new(program: impl Into<PathBuf>, args: impl IntoIterator<Item = impl Into<String>>, schema: MetricSchema) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
            schema,
            subjects: None,
            grace: Duration::from_millis(GRACE_MS),
        }
    }

    /// Restricts spawning to known subjects; others fail with `UnknownSubject`.
    pub fn with_subjects(mut self, subjects: impl IntoIterator<Item = SubjectId>) -> Self {
        self.subjects = Some(subjects.into_iter().collect());
        self
    }

    fn expand(&self, arg: &str, subject: &SubjectId, seed: u64, timeout_ms: u64, checkpoint: &Path) -> String {
        arg.replace("{subject}", subject.as_str())
            .replace("{seed}", &seed.to_string())
            .replace("{timeout_ms}", &timeout_ms.to_string())
            .replace("{checkpoint}", &checkpoint.to_string_lossy())
    }
}

struct ChildInstance {
    child: Child,
    started: Instant,
    deadline: Instant,
    killed: bool,
    result: Option<Termination>,
}

impl ChildInstance {
    fn finish(&mut self, exit: ExitKind) -> Termination {
        let t = Termination { exit, lifetime_ms: self.started.elapsed().as_millis() as u64 };
        self.result = Some(t);
        t
    }

    fn poll(&mut self) -> Option<Termination> {
        if let Some(t) = self.result {
            return Some(t);
        }
        match self.child.try_wait() {
            Ok(Some(status)) => {
                let exit = if self.killed {
                    ExitKind::Killed
                } else if status.success() {
                    ExitKind::Completed
                } else if status.code().is_some() {
                    ExitKind::Faulted
                } else {
                    ExitKind::Crashed
                };
                Some(self.finish(exit))
            }
            Ok(None) => None,
            Err(_) => Some(self.finish(ExitKind::Crashed)),
        }
    }
}

impl RunningInstance for ChildInstance {
    fn wait(&mut self) -> Termination {
        loop {
            if let Some(t) = self.poll() {
                return t;
            }
            if Instant::now() >= self.deadline {
                let _ = self.child.kill();
                let _ = self.child.wait();
                return self.finish(ExitKind::TimedOut);
            }
            thread::sleep(Duration::from_millis(2));
        }
    }

    fn kill(&mut self) {
        if self.poll().is_none() {
            self.killed = true;
            let _ = self.child.kill();
        }
    }

    fn is_finished(&mut self) -> bool {
        self.poll().is_some()
    }
}

impl OptimizerAdapter for ProcessAdapter {
    fn schema(&self) -> &MetricSchema {
        &self.schema
    }

    fn spawn(&self, subject: &SubjectId, seed: u64, timeout_ms: u64, checkpoint: &Path) -> Result<InstanceHandle, SpawnFailure> {
        if self.subjects.as_ref().is_some_and(|s| !s.contains(subject)) {
            return Err(SpawnFailure::UnknownSubject(subject.to_string()));
        }
        if timeout_ms == 0 {
            return Err(SpawnFailure::InvalidTimeout);
        }
        let launched = Instant::now();
        let args: Vec<String> = self.args.iter().map(|a| self.expand(a, subject, seed, timeout_ms, checkpoint)).collect();
        let child = Command::new(&self.program)
            .args(&args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SpawnFailure::Io(format!("{}: {e}", self.program.display())))?;
        let started = Instant::now();
        let instance = ChildInstance {
            child,
            started,
            deadline: started + Duration::from_millis(timeout_ms) + self.grace,
            killed: false,
            result: None,
        };
        Ok(InstanceHandle::running(subject.clone(), seed, timeout_ms, checkpoint.to_path_buf(), started - launched, Box::new(instance)))
    }
}
