//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use betrun_core::adapter::{ExitKind, InstanceReport};
use betrun_core::budget::{plan_budget, survivor_timeout, BudgetMode, RestartStrategy};
use betrun_core::campaign::{error_tally, run_campaign, CampaignConfig, CampaignOptions, CampaignRecord};
use betrun_core::orchestrator::{run_bet_and_run, select_survivor, Failure, RunRequest};
use betrun_core::rng::{SeedSource, SplitMix64};
use betrun_core::schema::FITNESS_SCORE;
use betrun_core::stats::{aggregate, classify, rank_sum_test, ComparisonRecord, SampleSet, Verdict, ALPHA};
use betrun_core::surrogate::{fixture, make_subject_suite, Family, FaultInjection, SuiteSpec};

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn strat(s: &str) -> RestartStrategy {
    s.parse().unwrap()
}

fn campaign(suite: &str, strategies: &str, t_total: u64, reps: u32, seed: u64, dir: &Path) -> Vec<CampaignRecord> {
    let cfg = CampaignConfig {
        suite: SuiteSpec::parse(suite).unwrap(),
        strategies: strategies.split(',').map(strat).collect(),
        t_total_ms: t_total,
        repetitions: reps,
        master_seed: seed,
        ..Default::default()
    };
    let out = dir.join(format!("c-{seed}-{}.jsonl", cfg.fingerprint()));
    let summary = run_campaign(&cfg, &cfg.adapter().unwrap(), &out, &CampaignOptions::default()).unwrap();
    assert!(summary.complete);
    summary.records
}

#[test]
fn criterion_01_budget_arithmetic() {
    let expected = [("1:100%", 300_000, 0), ("40:1%", 3_000, 180_000), ("20:2%", 6_000, 180_000), ("8:5%", 15_000, 180_000)];
    let mut got = Vec::new();
    let pass = expected.iter().all(|&(s, t_k, t_f)| {
        let plan = plan_budget(strat(s), 300_000).unwrap();
        got.push(format!("{s}=({}, {})", plan.t_k, plan.t_f));
        (plan.t_k, plan.t_f) == (t_k, t_f)
    });
    verdict(1, pass, &got.join(" "));
}

#[test]
fn criterion_02_lagged_failure_mode() {
    let dir = tempfile::tempdir().unwrap();
    let suite = "lagged,10,targets=20..200,lag_ms=50,cover_prob=0.3,hard=0..3,hard_prob=0.001,step_ms=10";
    let records = campaign(suite, "40:1%,20:2%,8:5%", 3_000, 30, 7, dir.path());
    let mut no_viable: BTreeMap<RestartStrategy, (usize, usize)> = BTreeMap::new();
    let mut producing: BTreeMap<&str, bool> = BTreeMap::new();
    for r in &records {
        let e = no_viable.entry(r.strategy).or_default();
        e.0 += (r.outcome.failure == Failure::NoViableCandidate) as usize;
        e.1 += 1;
        if r.strategy == strat("8:5%") {
            let ok = producing.entry(r.subject.as_str()).or_insert(true);
            *ok &= r.outcome.usable_final().is_some();
        }
    }
    let short = [strat("40:1%"), strat("20:2%")].iter().all(|s| {
        let (fails, runs) = no_viable[s];
        fails == runs && runs == 300
    });
    let subjects_ok = producing.values().filter(|&&ok| ok).count();
    let detail = format!(
        "40:1% no-viable {}/{}, 20:2% no-viable {}/{}, 8:5% final result on {subjects_ok}/10 subjects in all reps",
        no_viable[&strat("40:1%")].0,
        no_viable[&strat("40:1%")].1,
        no_viable[&strat("20:2%")].0,
        no_viable[&strat("20:2%")].1
    );
    verdict(2, short && subjects_ok >= 9, &detail);
}

fn report(index: usize, score: Option<f64>, errored: bool) -> InstanceReport {
    InstanceReport {
        index,
        seed: index as u64,
        score,
        metrics: BTreeMap::new(),
        errored,
        produced_output: score.is_some(),
        error_count: errored as u32,
        exit: if errored { ExitKind::Faulted } else { ExitKind::Completed },
        lifetime_ms: 0,
    }
}

/// Least index among eligible minima, by direct scan.
fn expected_survivor(starters: &[InstanceReport]) -> Option<usize> {
    let eligible: Vec<usize> = (0..starters.len()).filter(|&i| !starters[i].errored && starters[i].score.is_some()).collect();
    let min = eligible.iter().map(|&i| starters[i].score.unwrap()).fold(f64::INFINITY, f64::min);
    eligible.into_iter().find(|&i| starters[i].score.unwrap() == min)
}

#[test]
fn criterion_03_elitism() {
    let mut rng = SplitMix64::new(2024);
    let (mut lists, mut shifted, mut empty, mut bad) = (0, 0, 0, 0);
    while lists < 12_000 {
        let n = 1 + rng.index(40);
        let starters: Vec<InstanceReport> = (0..n)
            .map(|i| {
                let score = if rng.chance(0.1) { None } else { Some(rng.below(12) as f64) };
                report(i, score, rng.chance(0.2))
            })
            .collect();
        lists += 1;
        let got = select_survivor(&starters);
        if got != expected_survivor(&starters) {
            bad += 1;
        }
        if got.is_none() {
            empty += 1;
            continue;
        }
        // make the chosen candidate the unique minimum, then flag it as errored
        let i = got.unwrap();
        let mut modified = starters.clone();
        modified[i].score = Some(-1.0);
        if select_survivor(&modified) != Some(i) {
            bad += 1;
        }
        modified[i].errored = true;
        let mut reference = modified.clone();
        reference[i].score = None;
        if select_survivor(&modified) != expected_survivor(&reference) {
            bad += 1;
        }
        shifted += 1;
    }
    let all_bad: Vec<InstanceReport> = (0..8).map(|i| report(i, if i % 2 == 0 { Some(1.0) } else { None }, i % 2 == 0)).collect();
    let none_ok = select_survivor(&all_bad).is_none() && select_survivor(&[]).is_none();
    verdict(3, bad == 0 && none_ok && empty > 0, &format!("{lists} lists, {shifted} errored-minimum shifts, {empty} all-ineligible, {bad} mismatches"));
}

#[test]
fn criterion_04_budget_fairness() {
    let dir = tempfile::tempdir().unwrap();
    let subjects = make_subject_suite(&SuiteSpec::default_suite()).unwrap();
    let adapter = betrun_core::adapter::InProcessAdapter::new(subjects.clone());
    let mut rng = SplitMix64::new(99);
    let t_total = 1_000;
    let (mut runs, mut violations) = (0, 0);
    for mode in [BudgetMode::Strict, BudgetMode::EmulatedPause] {
        let mut done = 0;
        while done < 200 {
            let n = 1 + rng.below(40) as u32;
            let pct = 100.0 * (1 + rng.below(1_000 / n as u64)) as f64 / 1_000.0;
            let strategy = RestartStrategy::from_percent(n, pct).unwrap();
            let Ok(plan) = plan_budget(strategy, t_total) else { continue };
            let subject = &subjects[rng.index(subjects.len())].id;
            let req = RunRequest {
                subject,
                strategy,
                t_total,
                mode,
                seeds: SeedSource::new(rng.next_u64()),
                repetition: 0,
                workdir: dir.path(),
                cleanup: true,
            };
            let out = run_bet_and_run(&req, &adapter).unwrap();
            let bound = match mode {
                BudgetMode::Strict => t_total,
                BudgetMode::EmulatedPause => t_total + plan.t_k,
            };
            let lived: u64 = out.starters.iter().map(|s| s.lifetime_ms).sum::<u64>()
                + if out.survivor_ran() { out.final_report.as_ref().unwrap().lifetime_ms } else { 0 };
            if out.charged_budget > bound || lived > bound || out.charged_budget != plan.starting_budget(n) + if out.survivor_ran() { survivor_timeout(&plan, mode) } else { 0 } {
                violations += 1;
            }
            done += 1;
            runs += 1;
        }
    }
    verdict(4, violations == 0, &format!("{runs} runs over both modes, {violations} over budget"));
}

/// Enumerates all assignments of the pooled values to the first sample.
fn brute_force_p(xs: &[f64], ys: &[f64]) -> f64 {
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let n = pooled.len();
    let rank = |v: f64| {
        let less = pooled.iter().filter(|&&w| w < v).count() as f64;
        let equal = pooled.iter().filter(|&&w| w == v).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&v| rank(v)).collect();
    let centre = xs.len() as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..xs.len()].iter().sum::<f64>() - centre).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != xs.len() {
            continue;
        }
        total += 1;
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        hits += ((s - centre).abs() >= observed - 1e-9) as u64;
    }
    hits as f64 / total as f64
}

#[test]
fn criterion_05_rank_sum_oracle() {
    let grid = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 6.0, 7.0, 7.0, 9.0, 10.0];
    let mut rng = SplitMix64::new(5);
    let (mut cases, mut worst) = (0, 0.0f64);
    for m in 1..=6 {
        for n in 1..=6 {
            for _ in 0..40 {
                let xs: Vec<f64> = (0..m).map(|_| grid[rng.index(grid.len())]).collect();
                let ys: Vec<f64> = (0..n).map(|_| grid[rng.index(grid.len())]).collect();
                let p = rank_sum_test(&xs, &ys).unwrap().p_value;
                worst = worst.max((p - brute_force_p(&xs, &ys)).abs());
                cases += 1;
            }
        }
    }
    let constant = rank_sum_test(&[5.0; 3], &[5.0; 3]).unwrap().p_value;
    let separated = rank_sum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap().p_value;
    let pass = worst <= 1e-12 && constant == 1.0 && separated == 0.1;
    verdict(5, pass, &format!("{cases} pairs, max deviation {worst:e}, constant p = {constant}, [1,2,3] vs [4,5,6] p = {separated}"));
}

fn fitness_verdicts(records: &[CampaignRecord]) -> Vec<ComparisonRecord> {
    let mut samples: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let Some(f) = r.outcome.usable_final() else { continue };
        let e = samples.entry(r.subject.as_str()).or_default();
        if r.strategy.is_baseline() { &mut e.0 } else { &mut e.1 }.push(f.score.unwrap());
    }
    samples
        .into_iter()
        .map(|(subject, (baseline, bar))| {
            let s = SampleSet { subject: subject.into(), metric: FITNESS_SCORE.into(), direction: betrun_core::schema::Direction::LowerIsBetter, baseline, bar };
            classify(&s, ALPHA).unwrap()
        })
        .collect()
}

#[test]
fn criterion_06_plateau_and_fast_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let plateau = campaign("plateau,6,rate=2..8,step_ms=10", "1:100%,8:5%", 2_000, 30, 11, dir.path());
    let a = fitness_verdicts(&plateau);
    let better = a.iter().filter(|c| c.direction == Verdict::BarBetter && c.p_value < 0.05).count();
    let fast = campaign("lagged,6,targets=20..60,lag_ms=50,cover_prob=0.3,hard=0,step_ms=10", "1:100%,8:5%", 2_000, 30, 11, dir.path());
    let b = fitness_verdicts(&fast);
    let same = b.iter().filter(|c| !c.significant).count();
    verdict(6, better >= 4 && same >= 4, &format!("plateau: BAR significantly better on {better}/6; fast lagged: no significant difference on {same}/6"));
}

#[test]
fn criterion_07_stability() {
    let dir = tempfile::tempdir().unwrap();
    let suite = SuiteSpec::default_suite().with_fault(FaultInjection::default()).to_string();
    let mut wins = 0;
    let mut fractions = Vec::new();
    for seed in 1..=20 {
        let records = campaign(&suite, "1:100%,8:5%", 2_000, 30, seed, dir.path());
        let t = error_tally(&records);
        let (base, bar) = (t[0].error_run_fraction(), t[1].error_run_fraction());
        wins += (bar < base) as usize;
        fractions.push(format!("{:.3}/{:.3}", base, bar));
        for f in fs::read_dir(dir.path()).unwrap() {
            let _ = fs::remove_file(f.unwrap().path());
        }
    }
    verdict(7, wins >= 16, &format!("BAR error-run fraction below baseline in {wins}/20 seeds; baseline/bar: {}", fractions.join(" ")));
}

#[test]
fn criterion_08_table_row() {
    let mut records = Vec::new();
    let mut add = |direction: Verdict, count: usize, significant: usize| {
        for i in 0..count {
            let p_value = match (direction, i < significant) {
                (Verdict::Equal, true) => 1.0,
                (Verdict::Equal, false) => 0.9,
                (_, true) => 0.01,
                (_, false) => 0.4,
            };
            records.push(ComparisonRecord { subject: format!("{direction}-{i}").into(), metric: FITNESS_SCORE.into(), p_value, direction, significant: p_value < ALPHA });
        }
    };
    add(Verdict::Equal, 28, 28);
    add(Verdict::BarWorse, 19, 2);
    add(Verdict::BarBetter, 43, 4);
    let table = aggregate(&records);
    let row = table.row(FITNESS_SCORE).unwrap().to_string();
    let rendered = table.to_string();
    let line = rendered.lines().find(|l| l.starts_with("Fitness Score")).unwrap_or("");
    let normalized = line.split_whitespace().skip(2).collect::<Vec<_>>().join(" ");
    verdict(8, row == "28 (28) 19 (2) 43 (4)" && normalized == row, &format!("row {row:?}"));
}

const BIN: &str = env!("CARGO_BIN_EXE_betrun");

fn betrun(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("BETRUN_WORKERS").output().unwrap()
}

fn pipeline(dir: &Path) -> Vec<Vec<u8>> {
    let run = betrun(&["run", "--reps", "4", "--seed", "42", "--out", "records.jsonl"], dir);
    assert!(run.status.code().unwrap() <= 2, "{}", String::from_utf8_lossy(&run.stderr));
    let a = betrun(&["analyze", "records.jsonl", "--out", "comparison.jsonl"], dir);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let r = betrun(&["report", "--input", "comparison.jsonl", "--table", "report.txt", "--json", "report.jsonl"], dir);
    assert!(r.status.success());
    ["records.jsonl", "comparison.jsonl", "report.txt", "report.jsonl"].iter().map(|f| fs::read(dir.join(f)).unwrap()).collect()
}

#[test]
fn criterion_09_determinism_and_resume() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let identical = pipeline(a.path()) == pipeline(b.path());

    let args = ["run", "--reps", "12", "--seed", "3", "--workers", "1", "--out", "records.jsonl"];
    let full = tempfile::tempdir().unwrap();
    let status = betrun(&args, full.path()).status;
    let expected = fs::read(full.path().join("records.jsonl")).unwrap();
    let total_lines = expected.iter().filter(|&&c| c == b'\n').count();

    let cut = tempfile::tempdir().unwrap();
    let path = cut.path().join("records.jsonl");
    let mut child = Command::new(BIN).args(args).current_dir(cut.path()).stdout(Stdio::null()).spawn().unwrap();
    let started = Instant::now();
    while started.elapsed() < Duration::from_secs(120) {
        let lines = fs::read(&path).map(|b| b.iter().filter(|&&c| c == b'\n').count()).unwrap_or(0);
        if lines > total_lines / 3 {
            break;
        }
        thread::sleep(Duration::from_millis(2));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let partial = fs::read(&path).unwrap();
    let partial_lines = partial.iter().filter(|&&c| c == b'\n').count();
    let resumed = betrun(&args, cut.path());
    let after = fs::read(&path).unwrap();
    let complete_prefix = &partial[..partial.iter().rposition(|&c| c == b'\n').map_or(0, |i| i + 1)];
    let pass = identical
        && status.code() == resumed.status.code()
        && partial_lines < total_lines
        && after == expected
        && after.starts_with(complete_prefix);
    verdict(
        9,
        pass,
        &format!("pipeline byte-identical: {identical}; killed at {partial_lines}/{total_lines} lines, resumed file identical: {}", after == expected),
    );
}

#[test]
fn criterion_10_surrogate_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let subjects: Vec<_> = make_subject_suite(&SuiteSpec::default_suite())
        .unwrap()
        .into_iter()
        .filter(|s| s.family() == Family::Mvc && s.reference_optimum().is_ok())
        .chain(fixture("k3"))
        .collect();
    let tsp = fixture("unit-square").unwrap();
    let adapter = betrun_core::adapter::InProcessAdapter::new(subjects.iter().cloned().chain([tsp.clone()]));
    let hits = |subject: &betrun_core::surrogate::Subject| -> usize {
        let optimum = subject.reference_optimum().unwrap();
        (0..30)
            .filter(|&rep| {
                let req = RunRequest {
                    subject: &subject.id,
                    strategy: RestartStrategy::BASELINE,
                    t_total: 2_000,
                    mode: BudgetMode::Strict,
                    seeds: SeedSource::new(10),
                    repetition: rep,
                    workdir: dir.path(),
                    cleanup: true,
                };
                let out = run_bet_and_run(&req, &adapter).unwrap();
                out.usable_final().and_then(|f| f.score).is_some_and(|s| (s - optimum).abs() < 1e-9)
            })
            .count()
    };
    let mut detail = Vec::new();
    let mut pass = subjects.len() >= 3;
    for s in &subjects {
        let h = hits(s);
        pass &= h >= 25;
        detail.push(format!("{} {h}/30", s.id));
    }
    let t = hits(&tsp);
    pass &= t == 30;
    detail.push(format!("unit-square {t}/30"));
    verdict(10, pass, &detail.join(", "));
}
