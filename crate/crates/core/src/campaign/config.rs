use std::fmt;
use std::str::FromStr;

use crate::adapter::{Execution, InProcessAdapter};
use crate::budget::{plan_budget, BudgetMode, RestartStrategy};
use crate::rng::hash_str;
use crate::surrogate::{make_subject_suite, Subject, SubjectId, SuiteSpec};

use super::CampaignError;

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "BETRUN_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub suite: SuiteSpec,
    /// First entry is normally the baseline.
    pub strategies: Vec<RestartStrategy>,
    pub t_total_ms: u64,
    pub repetitions: u32,
    pub workers: usize,
    pub master_seed: u64,
    pub mode: BudgetMode,
    /// Largest tolerated fraction of bad repetitions per subject and strategy.
    pub theta: f64,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            suite: SuiteSpec::default_suite(),
            strategies: vec![RestartStrategy::BASELINE, RestartStrategy::from_percent(8, 5.0).expect("valid")],
            t_total_ms: 2_000,
            repetitions: 30,
            workers: default_workers(),
            master_seed: 1,
            mode: BudgetMode::Strict,
            theta: 0.5,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::InvalidConfig(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if self.strategies.is_empty() {
            return bad("no strategies configured".into());
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return bad(format!("strategy {s} listed twice"));
            }
            plan_budget(*s, self.t_total_ms)?;
        }
        if self.suite.subject_count() == 0 {
            return bad("no subjects configured".into());
        }
        self.subjects()?;
        Ok(())
    }

    pub fn subjects(&self) -> Result<Vec<Subject>, CampaignError> {
        Ok(make_subject_suite(&self.suite)?)
    }

    pub fn subject_ids(&self) -> Result<Vec<SubjectId>, CampaignError> {
        Ok(self.subjects()?.into_iter().map(|s| s.id).collect())
    }

    /// In-process adapter over the configured suite. Instances run on the
    /// calling worker thread.
    pub fn adapter(&self) -> Result<InProcessAdapter, CampaignError> {
        Ok(InProcessAdapter::new(self.subjects()?).with_execution(Execution::Inline))
    }

    /// Applies `BETRUN_WORKERS` if it is set to a positive integer.
    pub fn apply_env(&mut self) -> Result<(), CampaignError> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            self.workers = v
                .trim()
                .parse()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| CampaignError::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        }
        Ok(())
    }

    /// Hash of everything that determines the records; the worker count is excluded.
    pub fn fingerprint(&self) -> String {
        let canonical = Self { workers: 1, ..self.clone() }.to_string();
        format!("{:016x}", hash_str(&canonical))
    }
}

/// `key = value` lines followed by a `[subjects]` section with suite lines.
impl fmt::Display for CampaignConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let strategies: Vec<String> = self.strategies.iter().map(|s| String::from(*s)).collect();
        writeln!(f, "strategies = {}", strategies.join(", "))?;
        writeln!(f, "t_total_ms = {}", self.t_total_ms)?;
        writeln!(f, "repetitions = {}", self.repetitions)?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "master_seed = {}", self.master_seed)?;
        writeln!(f, "mode = {}", self.mode)?;
        writeln!(f, "theta = {}", self.theta)?;
        writeln!(f)?;
        writeln!(f, "[subjects]")?;
        write!(f, "{}", self.suite)
    }
}

impl FromStr for CampaignConfig {
    type Err = CampaignError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = CampaignConfig::default();
        let mut suite_text = String::new();
        let mut in_subjects = false;
        let mut saw_subjects = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CampaignError::InvalidConfig(format!("line {}: {m}", i + 1));
            if line.starts_with('[') {
                if line != "[subjects]" {
                    return Err(err(format!("unknown section {line}")));
                }
                in_subjects = true;
                saw_subjects = true;
                continue;
            }
            if in_subjects {
                suite_text.push_str(line);
                suite_text.push('\n');
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |what: &str| err(format!("bad {what}: {value:?}"));
            match key {
                "strategies" => {
                    cfg.strategies = value
                        .split(',')
                        .map(|s| s.trim().parse::<RestartStrategy>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| err(e.to_string()))?;
                }
                "t_total_ms" => cfg.t_total_ms = value.parse().map_err(|_| num(key))?,
                "repetitions" => cfg.repetitions = value.parse().map_err(|_| num(key))?,
                "workers" => cfg.workers = value.parse().map_err(|_| num(key))?,
                "master_seed" => cfg.master_seed = value.parse().map_err(|_| num(key))?,
                "mode" => cfg.mode = value.parse().map_err(|_| num(key))?,
                "theta" => cfg.theta = value.parse().map_err(|_| num(key))?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        if saw_subjects {
            cfg.suite = SuiteSpec::parse(&suite_text)?;
        }
        Ok(cfg)
    }
}
