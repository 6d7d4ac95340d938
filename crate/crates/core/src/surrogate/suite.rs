//! Subject suite configuration.
//!
//! One record per line: `family,count,param=value,...`. A value may be a
//! range `lo..hi`, spread linearly over the `count` subjects of that line.
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;

use crate::rng::{hash_str, SplitMix64};

use super::{Family, FaultInjection, Graph, LaggedCoverageProblem, MvcProblem, PlateauProblem, Problem, Subject, SubjectError, TspProblem};

/// The shipped desk-scale suite: 24 subjects, 6 per family.
pub const DEFAULT_SUITE: &str = include_str!("../../suites/default.suite");

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Fixed(f64),
    Range(f64, f64),
}

impl ParamValue {
    fn at(&self, i: usize, count: usize) -> f64 {
        match *self {
            ParamValue::Fixed(v) => v,
            ParamValue::Range(lo, _) if count <= 1 => lo,
            ParamValue::Range(lo, hi) => lo + (hi - lo) * i as f64 / (count - 1) as f64,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.split_once("..") {
            Some((lo, hi)) => Some(ParamValue::Range(lo.trim().parse().ok()?, hi.trim().parse().ok()?)),
            None => Some(ParamValue::Fixed(s.trim().parse().ok()?)),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Fixed(v) => write!(f, "{v}"),
            ParamValue::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub family: Family,
    pub count: usize,
    pub params: BTreeMap<String, ParamValue>,
}

impl fmt::Display for SuiteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.family.name(), self.count)?;
        for (k, v) in &self.params {
            write!(f, ",{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteSpec {
    pub entries: Vec<SuiteEntry>,
}

const COMMON: &[&str] = &["step_ms", "fault", "fault_window_ms", "seed"];

fn allowed(family: Family) -> &'static [&'static str] {
    match family {
        Family::Mvc => &["vertices", "density", "population", "mutation", "elite"],
        Family::Tsp => &["cities"],
        Family::Plateau => &["rate"],
        Family::Lagged => &["targets", "lag_ms", "cover_prob", "hard", "hard_prob"],
    }
}

impl SuiteSpec {
    pub fn parse(text: &str) -> Result<Self, SubjectError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SubjectError::Suite { line: i + 1, message };
            let mut fields = line.split(',').map(str::trim);
            let family_name = fields.next().unwrap_or_default();
            let family = Family::parse(family_name).ok_or_else(|| err(format!("unknown family {family_name:?}")))?;
            let count: usize = fields
                .next()
                .and_then(|c| c.parse().ok())
                .filter(|&c| c > 0)
                .ok_or_else(|| err("count must be a positive integer".into()))?;
            let mut params = BTreeMap::new();
            for field in fields.filter(|f| !f.is_empty()) {
                let (k, v) = field.split_once('=').ok_or_else(|| err(format!("expected param=value, got {field:?}")))?;
                let k = k.trim();
                if !COMMON.contains(&k) && !allowed(family).contains(&k) {
                    return Err(err(format!("unknown parameter {k:?} for family {}", family.name())));
                }
                let v = ParamValue::parse(v).ok_or_else(|| err(format!("bad value for {k}: {v:?}")))?;
                params.insert(k.to_string(), v);
            }
            entries.push(SuiteEntry { family, count, params });
        }
        Ok(Self { entries })
    }

    pub fn default_suite() -> Self {
        Self::parse(DEFAULT_SUITE).expect("shipped suite parses")
    }

    /// Sets the fault parameters of every entry.
    pub fn with_fault(mut self, fault: FaultInjection) -> Self {
        for e in &mut self.entries {
            e.params.insert("fault".into(), ParamValue::Fixed(fault.rate));
            e.params.insert("fault_window_ms".into(), ParamValue::Fixed(fault.window_ms as f64));
        }
        self
    }

    /// Keeps only the entries of one family.
    pub fn only(mut self, family: Family) -> Self {
        self.entries.retain(|e| e.family == family);
        self
    }

    pub fn subject_count(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

impl fmt::Display for SuiteSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

struct Params<'a> {
    entry: &'a SuiteEntry,
    index: usize,
}

impl Params<'_> {
    fn get(&self, key: &str) -> Option<f64> {
        self.entry.params.get(key).map(|v| v.at(self.index, self.entry.count))
    }

    fn real(&self, key: &str, default: f64) -> f64 {
        self.get(key).unwrap_or(default)
    }

    fn int(&self, key: &str, default: usize) -> usize {
        self.get(key).map(|v| v.round().max(0.0) as usize).unwrap_or(default)
    }

    fn required(&self, key: &str) -> Result<f64, SubjectError> {
        self.get(key).ok_or_else(|| SubjectError::InvalidParameter(format!("{} requires {key}", self.entry.family.name())))
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), SubjectError> {
    if cond {
        Ok(())
    } else {
        Err(SubjectError::InvalidParameter(msg()))
    }
}

fn probability(name: &str, v: f64) -> Result<f64, SubjectError> {
    check((0.0..=1.0).contains(&v), || format!("{name} = {v} outside [0, 1]"))?;
    Ok(v)
}

/// Expands a suite into concrete subjects with ids `<family>-<nn>`,
/// numbered per family in file order.
pub fn make_subject_suite(spec: &SuiteSpec) -> Result<Vec<Subject>, SubjectError> {
    let mut next_index: BTreeMap<Family, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for entry in &spec.entries {
        for index in 0..entry.count {
            let n = next_index.entry(entry.family).or_insert(0);
            let id = format!("{}-{:02}", entry.family.name(), n);
            *n += 1;
            out.push(build_subject(id, &Params { entry, index })?);
        }
    }
    Ok(out)
}

fn build_subject(id: String, p: &Params<'_>) -> Result<Subject, SubjectError> {
    let family = p.entry.family;
    let suite_seed = p.real("seed", 0.0) as u64;
    let mut rng = SplitMix64::stream(hash_str(&id) ^ suite_seed, "subject-instance");
    let default_step_ms = match family {
        Family::Mvc => 5.0,
        Family::Tsp => 2.0,
        Family::Plateau | Family::Lagged => 10.0,
    };
    let step_ms = p.real("step_ms", default_step_ms);
    check(step_ms > 0.0, || format!("step_ms = {step_ms} must be positive"))?;
    let fault = FaultInjection {
        rate: probability("fault", p.real("fault", 0.0))?,
        window_ms: p.int("fault_window_ms", FaultInjection::default().window_ms as usize) as u64,
    };
    let problem = match family {
        Family::Mvc => {
            let vertices = p.required("vertices")?.round() as usize;
            check(vertices >= 1, || "vertices must be at least 1".into())?;
            let density = probability("density", p.real("density", 0.2))?;
            let population = p.int("population", 40);
            let elite = p.int("elite", 2);
            check(population >= 2, || "population must be at least 2".into())?;
            check(elite < population, || format!("elite = {elite} must be below population = {population}"))?;
            Problem::Mvc(MvcProblem {
                graph: Graph::random(vertices, density, &mut rng),
                population,
                mutation_rate: probability("mutation", p.real("mutation", 0.05))?,
                elite,
            })
        }
        Family::Tsp => {
            let cities = p.required("cities")?.round() as usize;
            check(cities >= 1, || "cities must be at least 1".into())?;
            Problem::Tsp(TspProblem::random(cities, &mut rng))
        }
        Family::Plateau => {
            let rate = p.required("rate")?;
            check(rate > 0.0 && rate.is_finite(), || format!("rate = {rate} must be positive"))?;
            Problem::Plateau(PlateauProblem { rate_per_s: rate, salt: hash_str(&id) ^ suite_seed })
        }
        Family::Lagged => {
            let targets = p.required("targets")?.round() as usize;
            Problem::Lagged(LaggedCoverageProblem::generate(
                targets,
                p.int("lag_ms", 0) as u64,
                p.real("cover_prob", 0.3),
                p.int("hard", 0),
                p.real("hard_prob", 0.002),
                &mut rng,
            )?)
        }
    };
    Ok(Subject::new(id, problem, (step_ms * 1_000.0).round() as u64).with_fault(fault))
}
