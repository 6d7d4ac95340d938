//! Strategy and time-budget arithmetic.
//!
//! A [`RestartStrategy`] names a `RESTARTS^n_p` configuration: `n` seeded
//! instances, each evaluated after `p · t_total`. [`plan_budget`] turns it
//! into a concrete [`BudgetPlan`] in integer milliseconds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fractions are stored exactly as parts per million.
pub const PPM: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("instance count must be at least 1")]
    ZeroInstances,
    #[error("budget fraction must lie in (0, 1], got {0}")]
    FractionOutOfRange(f64),
    #[error("total budget must be positive")]
    EmptyBudget,
    #[error("infeasible split: {n} x {t_k} ms exceeds t_total = {t_total} ms")]
    InfeasibleSplit { n: u32, t_k: u64, t_total: u64 },
    #[error("evaluation window p * t_total rounds to 0 ms (t_total = {t_total} ms)")]
    DegenerateEvaluation { t_total: u64 },
    #[error("cannot parse strategy {0:?}; expected N:P% (e.g. 8:5%)")]
    Parse(String),
}

/// The `(n, p)` pair of a `RESTARTS^n_p` configuration.
///
/// `n * p <= 1` is not enforced here; [`plan_budget`] reports infeasible
/// splits once a concrete total budget is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct RestartStrategy {
    n: u32,
    p_ppm: u32,
}

impl RestartStrategy {
    /// The single uninterrupted run, `RESTARTS^1_100%`.
    pub const BASELINE: RestartStrategy = RestartStrategy { n: 1, p_ppm: PPM as u32 };

    /// `p` is a fraction in (0, 1]; it is rounded to the nearest part per million.
    pub fn new(n: u32, p: f64) -> Result<Self, BudgetError> {
        if n == 0 {
            return Err(BudgetError::ZeroInstances);
        }
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(BudgetError::FractionOutOfRange(p));
        }
        let p_ppm = (p * PPM as f64).round() as u32;
        if p_ppm == 0 {
            return Err(BudgetError::FractionOutOfRange(p));
        }
        Ok(Self { n, p_ppm })
    }

    pub fn from_percent(n: u32, percent: f64) -> Result<Self, BudgetError> {
        Self::new(n, percent / 100.0)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p_ppm as f64 / PPM as f64
    }

    pub fn p_ppm(&self) -> u32 {
        self.p_ppm
    }

    pub fn is_baseline(&self) -> bool {
        *self == Self::BASELINE
    }

    /// Percent with trailing zeros trimmed, e.g. `5` or `2.5`.
    pub fn percent_label(&self) -> String {
        let whole = self.p_ppm / 10_000;
        let frac = self.p_ppm % 10_000;
        if frac == 0 {
            whole.to_string()
        } else {
            let s = format!("{whole}.{frac:04}");
            s.trim_end_matches('0').to_string()
        }
    }

    /// Filesystem- and CSV-safe label, e.g. `8x5pct`.
    pub fn label(&self) -> String {
        format!("{}x{}pct", self.n, self.percent_label())
    }
}

impl fmt::Display for RestartStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RESTARTS^{}_{}%", self.n, self.percent_label())
    }
}

/// Parses `N:P%`, `N:P` (P in percent) or the [`RestartStrategy::label`] form.
impl FromStr for RestartStrategy {
    type Err = BudgetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (n, p) = if let Some((n, p)) = t.split_once(':') {
            (n, p.trim().trim_end_matches('%'))
        } else if let Some((n, p)) = t.split_once('x') {
            (n, p.trim_end_matches("pct"))
        } else {
            return Err(BudgetError::Parse(s.to_string()));
        };
        let n: u32 = n.trim().parse().map_err(|_| BudgetError::Parse(s.to_string()))?;
        let p: f64 = p.trim().parse().map_err(|_| BudgetError::Parse(s.to_string()))?;
        RestartStrategy::from_percent(n, p)
    }
}

impl From<RestartStrategy> for String {
    fn from(s: RestartStrategy) -> String {
        format!("{}:{}%", s.n, s.percent_label())
    }
}

impl TryFrom<String> for RestartStrategy {
    type Error = BudgetError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Concrete `(t_total, t_k, t_f)` split in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub t_total: u64,
    pub t_k: u64,
    pub t_f: u64,
}

impl BudgetPlan {
    /// Budget consumed by the starting phase, `n · t_k`.
    pub fn starting_budget(&self, n: u32) -> u64 {
        n as u64 * self.t_k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// Survivor is restarted with `t_f`; total charge never exceeds `t_total`.
    #[default]
    Strict,
    /// Survivor is restarted with `t_f + t_k`, as if the instance had been paused.
    EmulatedPause,
}

impl fmt::Display for BudgetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetMode::Strict => "strict",
            BudgetMode::EmulatedPause => "emulated-pause",
        })
    }
}

impl FromStr for BudgetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "strict" => Ok(BudgetMode::Strict),
            "emulated-pause" => Ok(BudgetMode::EmulatedPause),
            other => Err(format!("unknown budget mode {other:?} (expected strict|emulated-pause)")),
        }
    }
}

/// Splits `t_total` according to `strategy`.
///
/// `t_k = round_half_up(p · t_total)` and `t_f = t_total − n · t_k`, both
/// computed in exact integer arithmetic.
pub fn plan_budget(strategy: RestartStrategy, t_total: u64) -> Result<BudgetPlan, BudgetError> {
    if t_total == 0 {
        return Err(BudgetError::EmptyBudget);
    }
    let scaled = strategy.p_ppm as u128 * t_total as u128;
    let t_k = ((scaled + (PPM as u128 / 2)) / PPM as u128) as u64;
    if t_k == 0 {
        return Err(BudgetError::DegenerateEvaluation { t_total });
    }
    let starting = strategy.n as u128 * t_k as u128;
    if starting > t_total as u128 {
        return Err(BudgetError::InfeasibleSplit { n: strategy.n, t_k, t_total });
    }
    Ok(BudgetPlan { t_total, t_k, t_f: t_total - starting as u64 })
}

pub fn survivor_timeout(plan: &BudgetPlan, mode: BudgetMode) -> u64 {
    match mode {
        BudgetMode::Strict => plan.t_f,
        BudgetMode::EmulatedPause => plan.t_f + plan.t_k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strat(n: u32, pct: f64) -> RestartStrategy {
        RestartStrategy::from_percent(n, pct).unwrap()
    }

    #[test]
    fn reference_grid_at_five_minutes() {
        let cases = [(1, 100.0, 300_000, 0), (40, 1.0, 3_000, 180_000), (20, 2.0, 6_000, 180_000), (8, 5.0, 15_000, 180_000)];
        for (n, pct, t_k, t_f) in cases {
            let plan = plan_budget(strat(n, pct), 300_000).unwrap();
            assert_eq!((plan.t_k, plan.t_f), (t_k, t_f), "n={n} p={pct}%");
        }
    }

    #[test]
    fn infeasible_and_degenerate() {
        assert_eq!(
            plan_budget(strat(40, 3.0), 300_000),
            Err(BudgetError::InfeasibleSplit { n: 40, t_k: 9_000, t_total: 300_000 })
        );
        assert_eq!(plan_budget(strat(8, 0.01), 1_000), Err(BudgetError::DegenerateEvaluation { t_total: 1_000 }));
        assert_eq!(plan_budget(strat(1, 100.0), 0), Err(BudgetError::EmptyBudget));
    }

    #[test]
    fn rounds_half_up() {
        // 0.25% of 1 000 ms is 2.5 ms
        let plan = plan_budget(strat(2, 0.25), 1_000).unwrap();
        assert_eq!(plan.t_k, 3);
        assert_eq!(plan.t_f, 994);
        // 0.24% of 1 000 ms is 2.4 ms
        assert_eq!(plan_budget(strat(2, 0.24), 1_000).unwrap().t_k, 2);
    }

    #[test]
    fn rounding_up_can_make_a_unit_split_infeasible() {
        // n·p = 1 exactly but t_k rounds up
        let s = strat(4, 25.0);
        assert!(plan_budget(s, 1_000).is_ok());
        let s = RestartStrategy::new(3, 0.3335).unwrap();
        assert!(matches!(plan_budget(s, 1_000), Err(BudgetError::InfeasibleSplit { .. })));
    }

    #[test]
    fn survivor_timeouts() {
        let plan = BudgetPlan { t_total: 300_000, t_k: 15_000, t_f: 180_000 };
        assert_eq!(survivor_timeout(&plan, BudgetMode::Strict), 180_000);
        assert_eq!(survivor_timeout(&plan, BudgetMode::EmulatedPause), 195_000);
        let baseline = BudgetPlan { t_total: 300_000, t_k: 300_000, t_f: 0 };
        assert_eq!(survivor_timeout(&baseline, BudgetMode::Strict), 0);
    }

    #[test]
    fn strategy_validation_and_labels() {
        assert_eq!(RestartStrategy::new(0, 0.5), Err(BudgetError::ZeroInstances));
        assert!(RestartStrategy::new(1, 0.0).is_err());
        assert!(RestartStrategy::new(1, 1.5).is_err());
        assert!(RestartStrategy::new(1, f64::NAN).is_err());
        let s = strat(8, 5.0);
        assert_eq!(s.to_string(), "RESTARTS^8_5%");
        assert_eq!(s.label(), "8x5pct");
        assert_eq!("8:5%".parse::<RestartStrategy>().unwrap(), s);
        assert_eq!("8x5pct".parse::<RestartStrategy>().unwrap(), s);
        assert_eq!(strat(2, 2.5).label(), "2x2.5pct");
        assert!(RestartStrategy::BASELINE.is_baseline());
        assert_eq!(BudgetMode::default(), BudgetMode::Strict);
        assert_eq!(serde_json::to_string(&strat(2, 2.5)).unwrap(), "\"2:2.5%\"");
        assert_eq!(serde_json::from_str::<RestartStrategy>("\"8:5%\"").unwrap(), s);
        assert!(serde_json::from_str::<RestartStrategy>("\"0:5%\"").is_err());
        assert_eq!("emulated-pause".parse::<BudgetMode>().unwrap(), BudgetMode::EmulatedPause);
    }

    proptest! {
        #[test]
        fn feasible_plans_conserve_budget(n in 1u32..64, p_ppm in 1u32..=1_000_000, t_total in 1u64..10_000_000) {
            let s = RestartStrategy::new(n, p_ppm as f64 / 1e6).unwrap();
            if let Ok(plan) = plan_budget(s, t_total) {
                prop_assert_eq!(n as u64 * plan.t_k + plan.t_f, t_total);
                prop_assert!(plan.t_k > 0);
                prop_assert_eq!(plan, plan_budget(s, t_total).unwrap());
            }
        }

        #[test]
        fn reference_settings_share_survivor_time(t_secs in 1u64..3_600) {
            let t_total = t_secs * 1_000;
            let plans: Vec<_> = [(40, 1.0), (20, 2.0), (8, 5.0)]
                .iter()
                .map(|&(n, pct)| plan_budget(strat(n, pct), t_total).unwrap().t_f)
                .collect();
            prop_assert!(plans.iter().all(|&t_f| t_f == plans[0]));
        }
    }
}
