use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Name of the distinguished lower-is-better metric used for elitism.
pub const FITNESS_SCORE: &str = "fitness_score";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LowerIsBetter => "lower",
            Direction::HigherIsBetter => "higher",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower" => Ok(Direction::LowerIsBetter),
            "higher" => Ok(Direction::HigherIsBetter),
            other => Err(format!("unknown metric direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: Direction,
}

/// Ordered list of metrics an adapter reports. Always starts with
/// `fitness_score` (lower is better).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MetricSpec>", into = "Vec<MetricSpec>")]
pub struct MetricSchema {
    metrics: Vec<MetricSpec>,
}

impl MetricSchema {
    /// Builds a schema; `fitness_score` is prepended when absent and must
    /// otherwise be lower-is-better.
    pub fn new<I, S>(metrics: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (S, Direction)>,
        S: Into<String>,
    {
        let mut out: Vec<MetricSpec> = Vec::new();
        for (name, direction) in metrics {
            let name = name.into();
            if !is_valid_metric_name(&name) {
                return Err(format!("invalid metric name {name:?}"));
            }
            if out.iter().any(|m| m.name == name) {
                return Err(format!("duplicate metric {name:?}"));
            }
            out.push(MetricSpec { name, direction });
        }
        match out.iter().position(|m| m.name == FITNESS_SCORE) {
            Some(i) if out[i].direction != Direction::LowerIsBetter => {
                return Err("fitness_score must be lower-is-better".into());
            }
            Some(i) => {
                let f = out.remove(i);
                out.insert(0, f);
            }
            None => out.insert(0, MetricSpec { name: FITNESS_SCORE.into(), direction: Direction::LowerIsBetter }),
        }
        Ok(Self { metrics: out })
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetricSpec> {
        self.metrics.iter()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn direction(&self, name: &str) -> Option<Direction> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.direction)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.direction(name).is_some()
    }

    /// `name:direction` pairs joined by commas, as written in checkpoint headers.
    pub fn encode(&self) -> String {
        self.metrics.iter().map(|m| format!("{}:{}", m.name, m.direction)).collect::<Vec<_>>().join(",")
    }

    pub fn decode(s: &str) -> Result<Self, String> {
        let mut pairs = Vec::new();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (name, dir) = part.split_once(':').ok_or_else(|| format!("bad schema entry {part:?}"))?;
            pairs.push((name.to_string(), dir.parse()?));
        }
        Self::new(pairs)
    }
}

impl TryFrom<Vec<MetricSpec>> for MetricSchema {
    type Error = String;

    fn try_from(v: Vec<MetricSpec>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|m| (m.name, m.direction)))
    }
}

impl From<MetricSchema> for Vec<MetricSpec> {
    fn from(s: MetricSchema) -> Self {
        s.metrics
    }
}

/// Metric names are restricted to `[A-Za-z0-9_]` so the checkpoint wire
/// format never needs escaping.
pub fn is_valid_metric_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}
