use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::FITNESS_SCORE;
use crate::surrogate::SubjectId;

use super::{ComparisonRecord, Verdict};

/// Counts for one metric; bracketed counts are the significant ones.
///
/// For the equality column the bracket counts comparisons with `p = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub equal: usize,
    pub equal_same: usize,
    pub worse: usize,
    pub worse_sig: usize,
    pub better: usize,
    pub better_sig: usize,
}

impl MetricRow {
    fn new(metric: &str) -> Self {
        Self { metric: metric.to_string(), equal: 0, equal_same: 0, worse: 0, worse_sig: 0, better: 0, better_sig: 0 }
    }

    pub fn total(&self) -> usize {
        self.equal + self.worse + self.better
    }

    fn cells(&self) -> [String; 3] {
        [
            format!("{} ({})", self.equal, self.equal_same),
            format!("{} ({})", self.worse, self.worse_sig),
            format!("{} ({})", self.better, self.better_sig),
        ]
    }
}

/// The three cells, e.g. `28 (28) 19 (2) 43 (4)`.
impl fmt::Display for MetricRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cells().join(" "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<MetricRow>,
}

impl AggregateTable {
    pub fn row(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

const HEADERS: [&str; 4] = ["Metric", "BAR = BL", "BAR worse", "BAR better"];

/// `fitness_score` becomes `Fitness Score`.
pub fn metric_title(metric: &str) -> String {
    metric
        .split('_')
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            c.next().map_or_else(String::new, |h| h.to_uppercase().chain(c).collect())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Aligned text table: a header and one line per metric.
impl fmt::Display for AggregateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                let [a, b, c] = r.cells();
                [metric_title(&r.metric), a, b, c]
            })
            .collect();
        let mut widths = HEADERS.map(str::len);
        for line in &lines {
            for (w, cell) in widths.iter_mut().zip(line) {
                *w = (*w).max(cell.len());
            }
        }
        let header = HEADERS.map(String::from);
        for line in std::iter::once(&header).chain(&lines) {
            let text = format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                line[0],
                line[1],
                line[2],
                line[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            writeln!(f, "{}", text.trim_end())?;
        }
        Ok(())
    }
}

/// Metric order for reports: fitness score first, then first appearance.
fn metric_order(records: &[ComparisonRecord]) -> Vec<&str> {
    let mut order: Vec<&str> = Vec::new();
    if records.iter().any(|r| r.metric == FITNESS_SCORE) {
        order.push(FITNESS_SCORE);
    }
    for r in records {
        if !order.contains(&r.metric.as_str()) {
            order.push(&r.metric);
        }
    }
    order
}

/// Counts per metric and verdict.
///
/// A record whose `(subject, metric)` pair was already counted is ignored,
/// so every row sums to the number of distinct subjects reporting it.
pub fn aggregate(records: &[ComparisonRecord]) -> AggregateTable {
    let mut rows: Vec<MetricRow> = metric_order(records).into_iter().map(MetricRow::new).collect();
    let mut seen: BTreeSet<(&str, &SubjectId)> = BTreeSet::new();
    for r in records {
        if !seen.insert((&r.metric, &r.subject)) {
            continue;
        }
        let row = rows.iter_mut().find(|row| row.metric == r.metric).expect("metric listed");
        match r.direction {
            Verdict::Equal => {
                row.equal += 1;
                row.equal_same += (r.p_value == 1.0) as usize;
            }
            Verdict::BarWorse => {
                row.worse += 1;
                row.worse_sig += r.significant as usize;
            }
            Verdict::BarBetter => {
                row.better += 1;
                row.better_sig += r.significant as usize;
            }
        }
    }
    AggregateTable { rows }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignificantRow {
    pub metric: String,
    pub subject: SubjectId,
    pub direction: Verdict,
}

/// Significant non-equal comparisons, grouped by metric, worse before better.
pub fn significant_class_report(records: &[ComparisonRecord]) -> Vec<SignificantRow> {
    let order = metric_order(records);
    let mut rows: Vec<SignificantRow> = records
        .iter()
        .filter(|r| r.significant && r.direction != Verdict::Equal)
        .map(|r| SignificantRow { metric: r.metric.clone(), subject: r.subject.clone(), direction: r.direction })
        .collect();
    rows.sort_by(|a, b| {
        let pos = |m: &str| order.iter().position(|o| *o == m);
        (pos(&a.metric), a.direction, &a.subject).cmp(&(pos(&b.metric), b.direction, &b.subject))
    });
    rows.dedup();
    rows
}
