//! Subcommands of the `betrun` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use betrun_core::adapter::{drive, DriveOptions, OptimizerAdapter, ProcessAdapter, DEFAULT_CHECKPOINT_INTERVAL_MS};
use betrun_core::analysis::{analyze, build_report, Analysis, AnalysisSettings};
use betrun_core::budget::{BudgetMode, RestartStrategy};
use betrun_core::campaign::{run_campaign, CampaignConfig, CampaignOptions, RecordFile};
use betrun_core::checkpoint::{CheckpointHeader, CheckpointWriter};
use betrun_core::stats::rank_sum_test;
use betrun_core::surrogate::{fixture, make_subject_suite, surrogate_schema, FaultInjection, Subject, SubjectId, SuiteSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUN_FAILURES: u8 = 2;
pub const EXIT_ABORT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "betrun", version, about = "Bet-and-Run restart campaigns over anytime optimizers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a campaign and write raw records.
    Run(RunArgs),
    /// Compare baseline and Bet-and-Run records per subject and metric.
    Analyze(AnalyzeArgs),
    /// Render tables and summaries from a comparison file.
    Report(ReportArgs),
    /// Exhaustive reference values for small subjects and samples.
    Oracle(OracleArgs),
    /// Run one surrogate instance (used by --isolate).
    #[command(hide = true)]
    Instance(InstanceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Strict,
    EmulatedPause,
}

impl From<ModeArg> for BudgetMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => BudgetMode::Strict,
            ModeArg::EmulatedPause => BudgetMode::EmulatedPause,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Campaign config file; other flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of starters; with --p-percent runs a single strategy.
    #[arg(long, requires = "p_percent")]
    pub n: Option<u32>,
    /// Share of the budget per starter, in percent.
    #[arg(long, requires = "n")]
    pub p_percent: Option<f64>,
    #[arg(long)]
    pub t_total_ms: Option<u64>,
    #[arg(long)]
    pub reps: Option<u32>,
    /// Worker threads; the BETRUN_WORKERS environment variable takes precedence.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Suite file describing the subjects.
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// Inject transient faults into every subject at this per-seed rate.
    #[arg(long)]
    pub fault_rate: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Run each instance as a child process instead of in-process.
    #[arg(long)]
    pub isolate: bool,
    /// Directory for checkpoint files (default: a temporary directory).
    #[arg(long)]
    pub scratch: Option<PathBuf>,
    /// Raw record file; an existing file from the same campaign is resumed.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// One combined record file, or one file per strategy.
    #[arg(required = true, num_args = 1..=2)]
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = betrun_core::stats::ALPHA)]
    pub alpha: f64,
    /// Strategy to compare against the baseline, e.g. `8:5%`.
    #[arg(long)]
    pub bar: Option<RestartStrategy>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Comparison file written by `analyze`.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the text report here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Also write the line-delimited JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "query", required = true, multiple = false)]
pub struct OracleArgs {
    /// Exact two-sided rank-sum p-value for two comma-separated samples.
    #[arg(long, num_args = 2, value_names = ["XS", "YS"], group = "query")]
    pub rank_sum: Option<Vec<String>>,
    /// Minimum vertex cover size of a fixture (`k3`) or suite subject.
    #[arg(long, group = "query")]
    pub mvc: Option<String>,
    /// Optimal tour length of a fixture (`unit-square`) or suite subject.
    #[arg(long, group = "query")]
    pub tsp: Option<String>,
    /// Suite file used to resolve subject ids (default: the shipped suite).
    #[arg(long)]
    pub subjects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub timeout_ms: u64,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    #[arg(long)]
    pub fault_rate: Option<f64>,
}

pub fn main_with(cli: Cli, out: &mut dyn Write) -> ExitCode {
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::Instance(a) => cmd_instance(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ABORT)
        }
    }
}

fn load_suite(path: Option<&Path>) -> Result<SuiteSpec> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading suite {}", p.display()))?;
            Ok(SuiteSpec::parse(&text)?)
        }
        None => Ok(SuiteSpec::default_suite()),
    }
}

fn fault(rate: f64) -> Result<FaultInjection> {
    if !(0.0..=1.0).contains(&rate) {
        bail!("fault rate must lie in [0, 1], got {rate}");
    }
    Ok(FaultInjection { rate, ..FaultInjection::default() })
}

/// Campaign config from the config file and flags, flags taking precedence.
pub fn effective_config(a: &RunArgs) -> Result<CampaignConfig> {
    let mut cfg = match &a.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?.parse()?,
        None => CampaignConfig::default(),
    };
    if let Some(p) = &a.subjects {
        cfg.suite = load_suite(Some(p))?;
    }
    if let Some(rate) = a.fault_rate {
        cfg.suite = cfg.suite.with_fault(fault(rate)?);
    }
    if let (Some(n), Some(p)) = (a.n, a.p_percent) {
        cfg.strategies = vec![RestartStrategy::from_percent(n, p)?];
    }
    if let Some(v) = a.t_total_ms {
        cfg.t_total_ms = v;
    }
    if let Some(v) = a.reps {
        cfg.repetitions = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    cfg.apply_env()?;
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.mode {
        cfg.mode = v.into();
    }
    if let Some(v) = a.theta {
        cfg.theta = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn isolated_adapter(cfg: &CampaignConfig, a: &RunArgs) -> Result<ProcessAdapter> {
    let exe = std::env::current_exe().context("locating the betrun executable")?;
    let dir = a.scratch.clone().unwrap_or_else(std::env::temp_dir);
    fs::create_dir_all(&dir)?;
    let suite_path = dir.join(format!("betrun-{}.suite", cfg.fingerprint()));
    fs::write(&suite_path, cfg.suite.to_string())?;
    let args = vec![
        "instance".to_string(),
        "--subject".into(),
        "{subject}".into(),
        "--seed".into(),
        "{seed}".into(),
        "--timeout-ms".into(),
        "{timeout_ms}".into(),
        "--checkpoint".into(),
        "{checkpoint}".into(),
        "--subjects".into(),
        suite_path.to_string_lossy().into_owned(),
    ];
    Ok(ProcessAdapter::new(exe, args, surrogate_schema()).with_subjects(cfg.subject_ids()?))
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<u8> {
    let cfg = effective_config(a)?;
    writeln!(out, "# effective configuration")?;
    write!(out, "{cfg}")?;
    writeln!(out, "# out = {}", a.out.display())?;
    out.flush()?;

    let adapter: Box<dyn OptimizerAdapter> = if a.isolate { Box::new(isolated_adapter(&cfg, a)?) } else { Box::new(cfg.adapter()?) };
    let opts = CampaignOptions { scratch: a.scratch.clone(), stop_after: None };
    let summary = run_campaign(&cfg, adapter.as_ref(), &a.out, &opts)?;
    let failed = summary.failed_runs();
    writeln!(
        out,
        "{} records ({} resumed), {} run(s) without a usable result",
        summary.records.len(),
        summary.resumed,
        failed
    )?;
    Ok(if failed > 0 { EXIT_RUN_FAILURES } else { EXIT_OK })
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<u8> {
    writeln!(out, "# analyze")?;
    for r in &a.records {
        writeln!(out, "# records = {}", r.display())?;
    }
    writeln!(out, "# theta = {}", a.theta)?;
    writeln!(out, "# alpha = {}", a.alpha)?;
    if let Some(b) = a.bar {
        writeln!(out, "# bar = {}", String::from(b))?;
    }
    writeln!(out, "# out = {}", a.out.display())?;

    let files = a.records.iter().map(|p| RecordFile::read(p)).collect::<Result<Vec<_>, _>>()?;
    let settings = AnalysisSettings { theta: a.theta, alpha: a.alpha, bar: a.bar, ..Default::default() };
    let analysis = analyze(&files, &settings)?;
    for w in &analysis.warnings {
        eprintln!("warning: {w}");
    }
    fs::write(&a.out, analysis.to_jsonl()).with_context(|| format!("writing {}", a.out.display()))?;
    let eligible = analysis.eligibility.iter().filter(|v| v.eligible()).count();
    writeln!(out, "{} subjects, {} eligible, {} comparisons", analysis.eligibility.len(), eligible, analysis.comparisons.len())?;
    Ok(EXIT_OK)
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<u8> {
    writeln!(out, "# report")?;
    writeln!(out, "# input = {}", a.input.display())?;
    if let Some(p) = &a.table {
        writeln!(out, "# table = {}", p.display())?;
    }
    if let Some(p) = &a.json {
        writeln!(out, "# json = {}", p.display())?;
    }
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = build_report(&Analysis::from_jsonl(&text)?)?;
    let rendered = report.render_text();
    write!(out, "{rendered}")?;
    if let Some(p) = &a.table {
        fs::write(p, &rendered).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.json {
        fs::write(p, report.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(EXIT_OK)
}

fn parse_sample(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("not a number: {v:?}")))
        .collect()
}

fn resolve_subject(name: &str, suite: Option<&Path>) -> Result<Subject> {
    if let Some(s) = fixture(name) {
        return Ok(s);
    }
    let suite = load_suite(suite)?;
    let id = SubjectId::from(name);
    make_subject_suite(&suite)?
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| anyhow!("unknown subject {name}"))
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<u8> {
    if let Some(samples) = &a.rank_sum {
        writeln!(out, "# oracle rank-sum xs = {} ys = {}", samples[0], samples[1])?;
        let (xs, ys) = (parse_sample(&samples[0])?, parse_sample(&samples[1])?);
        let r = rank_sum_test(&xs, &ys)?;
        writeln!(out, "statistic = {}", r.statistic)?;
        writeln!(out, "p = {}", r.p_value)?;
        return Ok(EXIT_OK);
    }
    let (kind, name) = match (&a.mvc, &a.tsp) {
        (Some(n), _) => ("mvc", n),
        (_, Some(n)) => ("tsp", n),
        _ => bail!("nothing to compute"),
    };
    writeln!(out, "# oracle {kind} subject = {name}")?;
    let subject = resolve_subject(name, a.subjects.as_deref())?;
    if subject.family().name() != kind {
        bail!("{name} is a {} subject", subject.family().name());
    }
    let optimum = subject.reference_optimum()?;
    if kind == "mvc" {
        writeln!(out, "{}", optimum as u64)?;
    } else {
        writeln!(out, "{optimum:?}")?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_instance(a: &InstanceArgs) -> Result<u8> {
    let subject = resolve_subject(&a.subject, a.subjects.as_deref())?;
    let subject = match a.fault_rate {
        Some(rate) => subject.with_fault(fault(rate)?),
        None => subject,
    };
    let header = CheckpointHeader { subject: a.subject.clone(), seed: a.seed, schema: surrogate_schema() };
    let mut writer = CheckpointWriter::create(&a.checkpoint, &header)?;
    let opts = DriveOptions { interval_ms: DEFAULT_CHECKPOINT_INTERVAL_MS, ..Default::default() };
    let t = drive(&subject, a.seed, a.timeout_ms, &mut writer, &opts)?;
    Ok(if t.exit.is_abnormal() { 1 } else { 0 })
}
