//! From raw campaign records to comparison files and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::RestartStrategy;
use crate::campaign::{errors_by_subject, error_tally, filter_eligibility, CampaignError, CampaignRecord, EligibilityReason, EligibilityVerdict, ErrorTally, RecordFile};
use crate::schema::MetricSchema;
use crate::stats::{aggregate, classify, metric_title, significant_class_report, stability_test, AggregateTable, ComparisonRecord, SampleSet, SignificantRow, StabilityResult, StatsError, ALPHA};
use crate::surrogate::SubjectId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("metric schemas differ: {0} vs {1}")]
    SchemaMismatch(String, String),
    #[error("record files share no subjects")]
    DisjointSubjects,
    #[error("no records for the baseline {0}")]
    MissingBaseline(RestartStrategy),
    #[error("cannot pick the Bet-and-Run strategy among {0:?}; name one explicitly")]
    AmbiguousBar(Vec<String>),
    #[error("no records for strategy {0}")]
    MissingBar(RestartStrategy),
    #[error("theta must lie in [0, 1] and alpha in (0, 1)")]
    InvalidThreshold,
    #[error("comparison file line {line}: {message}")]
    BadComparisonFile { line: usize, message: String },
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    pub theta: f64,
    pub alpha: f64,
    pub baseline: RestartStrategy,
    /// Strategy compared against the baseline; inferred when there is only one.
    pub bar: Option<RestartStrategy>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self { theta: 0.5, alpha: ALPHA, baseline: RestartStrategy::BASELINE, bar: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisHeader {
    pub baseline: RestartStrategy,
    pub bar: RestartStrategy,
    pub theta: f64,
    pub alpha: f64,
    pub schema: MetricSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectErrors {
    pub subject: SubjectId,
    pub baseline: u64,
    pub bar: u64,
}

/// Content of a comparison file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Analysis {
    pub header: Option<AnalysisHeader>,
    pub eligibility: Vec<EligibilityVerdict>,
    pub comparisons: Vec<ComparisonRecord>,
    /// Per eligible subject, summed run error counts.
    pub subject_errors: Vec<SubjectErrors>,
    pub tallies: Vec<ErrorTally>,
    /// Not written to the file.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Analysis(AnalysisHeader),
    Eligibility(EligibilityVerdict),
    Comparison(ComparisonRecord),
    SubjectErrors(SubjectErrors),
    Tally(ErrorTally),
}

fn pick_bar(records: &[CampaignRecord], settings: &AnalysisSettings) -> Result<RestartStrategy, AnalysisError> {
    let present: BTreeSet<RestartStrategy> = records.iter().map(|r| r.strategy).collect();
    if !present.contains(&settings.baseline) {
        return Err(AnalysisError::MissingBaseline(settings.baseline));
    }
    match settings.bar {
        Some(bar) if present.contains(&bar) => Ok(bar),
        Some(bar) => Err(AnalysisError::MissingBar(bar)),
        None => {
            let others: Vec<RestartStrategy> = present.into_iter().filter(|s| *s != settings.baseline).collect();
            match others.as_slice() {
                [one] => Ok(*one),
                [] => Err(AnalysisError::AmbiguousBar(vec![])),
                many => Err(AnalysisError::AmbiguousBar(many.iter().map(|s| String::from(*s)).collect())),
            }
        }
    }
}

/// Eligibility, per-metric comparisons and error counts over one combined
/// record file or one file per strategy.
pub fn analyze(files: &[RecordFile], settings: &AnalysisSettings) -> Result<Analysis, AnalysisError> {
    if !(0.0..=1.0).contains(&settings.theta) || !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(AnalysisError::InvalidThreshold);
    }
    let mut warnings = Vec::new();
    let schema = match files.first() {
        Some(f) => f.header.schema.clone(),
        None => return Ok(Analysis::default()),
    };
    for f in &files[1..] {
        if f.header.schema != schema {
            return Err(AnalysisError::SchemaMismatch(schema.encode(), f.header.schema.encode()));
        }
    }
    for (i, f) in files.iter().enumerate() {
        if f.dropped_lines > 0 {
            warnings.push(format!(
                "file {}: {} trailing line(s) are incomplete and were ignored; using {} complete record(s)",
                i + 1,
                f.dropped_lines,
                f.records.len()
            ));
        }
    }

    // subjects present in every file
    let mut common: Option<BTreeSet<SubjectId>> = None;
    for f in files {
        let here: BTreeSet<SubjectId> = f.records.iter().map(|r| r.subject.clone()).collect();
        common = Some(match common {
            None => here,
            Some(c) => {
                let both: BTreeSet<_> = c.intersection(&here).cloned().collect();
                if both.len() < c.len().max(here.len()) {
                    warnings.push(format!("{} subject(s) appear in only some of the files and are skipped", c.union(&here).count() - both.len()));
                }
                both
            }
        });
    }
    let common = common.unwrap_or_default();
    if files.len() > 1 && common.is_empty() {
        return Err(AnalysisError::DisjointSubjects);
    }

    let mut seen = BTreeSet::new();
    let records: Vec<CampaignRecord> = files
        .iter()
        .flat_map(|f| &f.records)
        .filter(|r| common.contains(&r.subject))
        .filter(|r| seen.insert((r.subject.clone(), r.strategy, r.repetition)))
        .cloned()
        .collect();
    if records.is_empty() {
        return Ok(Analysis { warnings, ..Default::default() });
    }
    let baseline = settings.baseline;
    let bar = pick_bar(&records, settings)?;

    // subjects judged need runs on both sides
    let mut sides: BTreeMap<&SubjectId, (bool, bool)> = BTreeMap::new();
    for r in &records {
        let e = sides.entry(&r.subject).or_default();
        e.0 |= r.strategy == baseline;
        e.1 |= r.strategy == bar;
    }
    let judged: BTreeSet<SubjectId> = sides.iter().filter(|(_, &(a, b))| a && b).map(|(s, _)| (*s).clone()).collect();
    if judged.len() < sides.len() {
        warnings.push(format!("{} subject(s) lack runs for one strategy and are skipped", sides.len() - judged.len()));
    }
    let records: Vec<CampaignRecord> = records.into_iter().filter(|r| judged.contains(&r.subject)).collect();

    let eligibility = filter_eligibility(&records, baseline, bar, settings.theta)?;
    let eligible: BTreeSet<SubjectId> = eligibility.iter().filter(|v| v.eligible()).map(|v| v.subject.clone()).collect();

    let mut comparisons = Vec::new();
    for spec in schema.iter() {
        for subject in &eligible {
            let values = |strategy: RestartStrategy| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| &r.subject == subject && r.strategy == strategy)
                    .filter_map(|r| r.outcome.usable_final())
                    .filter_map(|f| f.metric(&spec.name))
                    .collect()
            };
            let (xs, ys) = (values(baseline), values(bar));
            if xs.is_empty() || ys.is_empty() {
                continue;
            }
            let sample = SampleSet { subject: subject.clone(), metric: spec.name.clone(), direction: spec.direction, baseline: xs, bar: ys };
            comparisons.push(classify(&sample, settings.alpha)?);
        }
    }

    let base_errors = errors_by_subject(&records, baseline, &eligible);
    let bar_errors = errors_by_subject(&records, bar, &eligible);
    let subject_errors = eligible
        .iter()
        .map(|s| SubjectErrors { subject: s.clone(), baseline: base_errors[s], bar: bar_errors[s] })
        .collect();
    let tallies = error_tally(&records).into_iter().filter(|t| t.strategy == baseline || t.strategy == bar).collect();

    Ok(Analysis {
        header: Some(AnalysisHeader { baseline, bar, theta: settings.theta, alpha: settings.alpha, schema }),
        eligibility,
        comparisons,
        subject_errors,
        tallies,
        warnings,
    })
}

impl Analysis {
    /// Line-delimited JSON, one object per line tagged with `kind`.
    pub fn to_jsonl(&self) -> String {
        let mut lines: Vec<Line> = Vec::new();
        lines.extend(self.header.clone().map(Line::Analysis));
        lines.extend(self.eligibility.iter().cloned().map(Line::Eligibility));
        lines.extend(self.comparisons.iter().cloned().map(Line::Comparison));
        lines.extend(self.subject_errors.iter().cloned().map(Line::SubjectErrors));
        lines.extend(self.tallies.iter().cloned().map(Line::Tally));
        lines.iter().map(|l| serde_json::to_string(l).expect("serializable") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, AnalysisError> {
        let mut out = Analysis::default();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| AnalysisError::BadComparisonFile { line: i + 1, message: e.to_string() })?;
            match line {
                Line::Analysis(h) => out.header = Some(h),
                Line::Eligibility(v) => out.eligibility.push(v),
                Line::Comparison(c) => out.comparisons.push(c),
                Line::SubjectErrors(e) => out.subject_errors.push(e),
                Line::Tally(t) => out.tallies.push(t),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EligibilitySummary {
    pub subjects: usize,
    pub eligible: usize,
    pub baseline_only: usize,
    pub bar_only: usize,
    pub both: usize,
}

/// Everything the `report` command prints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub header: Option<AnalysisHeader>,
    pub table: AggregateTable,
    pub significant: Vec<SignificantRow>,
    pub stability: Option<StabilityResult>,
    pub tallies: Vec<ErrorTally>,
    pub eligibility: EligibilitySummary,
}

pub fn build_report(analysis: &Analysis) -> Result<Report, AnalysisError> {
    let stability = if analysis.subject_errors.is_empty() {
        None
    } else {
        let base: Vec<u64> = analysis.subject_errors.iter().map(|e| e.baseline).collect();
        let bar: Vec<u64> = analysis.subject_errors.iter().map(|e| e.bar).collect();
        Some(stability_test(&base, &bar)?)
    };
    let mut eligibility = EligibilitySummary { subjects: analysis.eligibility.len(), ..Default::default() };
    for v in &analysis.eligibility {
        match v.reason {
            EligibilityReason::Eligible => eligibility.eligible += 1,
            EligibilityReason::BaselineErrors => eligibility.baseline_only += 1,
            EligibilityReason::BarErrors => eligibility.bar_only += 1,
            EligibilityReason::BothErrors => eligibility.both += 1,
        }
    }
    Ok(Report {
        header: analysis.header.clone(),
        table: aggregate(&analysis.comparisons),
        significant: significant_class_report(&analysis.comparisons),
        stability,
        tallies: analysis.tallies.clone(),
        eligibility,
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Row(&'a crate::stats::MetricRow),
    Significant(&'a SignificantRow),
    Stability(&'a StabilityResult),
    Tally {
        #[serde(flatten)]
        tally: &'a ErrorTally,
        errors_per_run: f64,
        error_run_fraction: f64,
    },
    Eligibility(&'a EligibilitySummary),
}

impl Report {
    pub fn to_jsonl(&self) -> String {
        let mut lines: Vec<ReportLine<'_>> = Vec::new();
        lines.extend(self.table.rows.iter().map(ReportLine::Row));
        lines.extend(self.significant.iter().map(ReportLine::Significant));
        lines.extend(self.stability.iter().map(ReportLine::Stability));
        lines.extend(self.tallies.iter().map(|t| ReportLine::Tally {
            tally: t,
            errors_per_run: t.errors_per_run(),
            error_run_fraction: t.error_run_fraction(),
        }));
        if self.eligibility.subjects > 0 {
            lines.push(ReportLine::Eligibility(&self.eligibility));
        }
        lines.iter().map(|l| serde_json::to_string(l).expect("serializable") + "\n").collect()
    }

    pub fn render_table(&self) -> String {
        self.table.to_string()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        if let Some(h) = &self.header {
            let _ = writeln!(s, "{} against {}, alpha {}, theta {}", h.bar, h.baseline, h.alpha, h.theta);
            let _ = writeln!(s);
        }
        s.push_str(&self.render_table());

        let _ = writeln!(s, "\nSignificant differences");
        if self.significant.is_empty() {
            let _ = writeln!(s, "  none");
        }
        let width = self.significant.iter().map(|r| metric_title(&r.metric).len()).max().unwrap_or(0);
        for r in &self.significant {
            let _ = writeln!(s, "  {:<width$}  {:<10}  {}", metric_title(&r.metric), r.direction, r.subject);
        }

        let _ = writeln!(s, "\nStability");
        match &self.stability {
            Some(st) => {
                let _ = writeln!(s, "  internal errors: baseline {}, bar {}; p = {:.6}", st.baseline_total, st.bar_total, st.p_value);
            }
            None => {
                let _ = writeln!(s, "  no eligible subjects");
            }
        }

        let _ = writeln!(s, "\nError tallies");
        if self.tallies.is_empty() {
            let _ = writeln!(s, "  none");
        }
        for t in &self.tallies {
            let _ = writeln!(
                s,
                "  {:<16} runs {:>5}  errors {:>5}  errors/run {:.4}  errored runs {:>5} ({:.1}%)",
                t.strategy.to_string(),
                t.runs,
                t.total_errors,
                t.errors_per_run(),
                t.errored_runs,
                100.0 * t.error_run_fraction()
            );
        }
        if self.eligibility.subjects > 0 {
            let e = &self.eligibility;
            let _ = writeln!(
                s,
                "\nEligibility: {} of {} subjects ({} fail under both, {} only under the baseline, {} only under bar)",
                e.eligible, e.subjects, e.both, e.baseline_only, e.bar_only
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{run_campaign, CampaignConfig, CampaignOptions};
    use crate::schema::FITNESS_SCORE;

    fn campaign(dir: &std::path::Path, name: &str, strategies: &str, suite: &str) -> RecordFile {
        let cfg: CampaignConfig = format!("strategies = {strategies}\nt_total_ms = 2000\nrepetitions = 4\nworkers = 1\n[subjects]\n{suite}").parse().unwrap();
        let out = dir.join(name);
        run_campaign(&cfg, &cfg.adapter().unwrap(), &out, &CampaignOptions::default()).unwrap();
        RecordFile::read(&out).unwrap()
    }

    const SUITE: &str = "plateau,2,rate=3,step_ms=20\ntsp,1,cities=8,step_ms=5";

    #[test]
    fn combined_and_split_files_agree() {
        let dir = tempfile::tempdir().unwrap();
        let both = campaign(dir.path(), "both", "1:100%, 8:5%", SUITE);
        let base = campaign(dir.path(), "base", "1:100%", SUITE);
        let bar = campaign(dir.path(), "bar", "8:5%", SUITE);
        let a = analyze(&[both], &AnalysisSettings::default()).unwrap();
        let b = analyze(&[base, bar], &AnalysisSettings::default()).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        // 3 subjects score fitness, only the plateau ones report coverage
        let count = |m: &str| a.comparisons.iter().filter(|c| c.metric == m).count();
        assert_eq!(count(FITNESS_SCORE), 3);
        assert_eq!(count("coverage"), 2);
        assert_eq!(Analysis::from_jsonl(&a.to_jsonl()).unwrap(), Analysis { warnings: vec![], ..a.clone() });
        let report = build_report(&a).unwrap();
        assert_eq!(report.table.row(FITNESS_SCORE).unwrap().total(), 3);
        assert!(report.render_text().contains("Fitness Score"));
    }

    #[test]
    fn disjoint_and_mismatched_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = campaign(dir.path(), "base", "1:100%", "plateau,1,rate=3,step_ms=20");
        let bar = campaign(dir.path(), "bar", "8:5%", "tsp,1,cities=8,step_ms=5");
        assert_eq!(analyze(&[base.clone(), bar], &AnalysisSettings::default()), Err(AnalysisError::DisjointSubjects));
        let mut other = base.clone();
        other.header.schema = MetricSchema::new([("other", crate::schema::Direction::HigherIsBetter)]).unwrap();
        assert!(matches!(analyze(&[base, other], &AnalysisSettings::default()), Err(AnalysisError::SchemaMismatch(..))));
    }

    #[test]
    fn truncated_file_uses_complete_records_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        campaign(dir.path(), "both", "1:100%, 8:5%", SUITE);
        let text = std::fs::read_to_string(dir.path().join("both")).unwrap();
        // keep header + 10 records + half a line
        let mut lines: Vec<&str> = text.lines().collect();
        let partial = &lines[11][..20];
        lines.truncate(11);
        let cut = lines.join("\n") + "\n" + partial;
        let file = RecordFile::parse(&cut).unwrap();
        assert_eq!(file.records.len(), 10);
        let a = analyze(&[file], &AnalysisSettings::default()).unwrap();
        assert!(!a.warnings.is_empty());
        // first subject complete (8 records), second has 2 baseline runs only
        assert_eq!(a.eligibility.len(), 1);
    }

    #[test]
    fn empty_comparison_file_gives_empty_report() {
        let a = Analysis::from_jsonl("").unwrap();
        let r = build_report(&a).unwrap();
        assert!(r.table.is_empty());
        assert!(r.stability.is_none());
        assert_eq!(r.to_jsonl(), "");
    }

    #[test]
    fn strategy_selection() {
        let dir = tempfile::tempdir().unwrap();
        let f = campaign(dir.path(), "three", "1:100%, 8:5%, 20:2%", "plateau,1,rate=3,step_ms=20");
        assert!(matches!(analyze(&[f.clone()], &AnalysisSettings::default()), Err(AnalysisError::AmbiguousBar(_))));
        let pick = AnalysisSettings { bar: Some("20:2%".parse().unwrap()), ..Default::default() };
        assert_eq!(analyze(&[f], &pick).unwrap().header.unwrap().bar, "20:2%".parse().unwrap());
    }
}
