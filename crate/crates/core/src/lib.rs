//! Budget-split restart orchestration for anytime optimizers.
//!
//! A run starts `n` instances of an optimizer, evaluates them after a short
//! window, and continues only the best one with the remaining budget.

pub mod adapter;
pub mod analysis;
pub mod budget;
pub mod campaign;
pub mod checkpoint;
pub mod orchestrator;
pub mod rng;
pub mod schema;
pub mod stats;
pub mod surrogate;

pub use budget::{plan_budget, survivor_timeout, BudgetError, BudgetMode, BudgetPlan, RestartStrategy};
pub use orchestrator::{phase_log, run_bet_and_run, select_survivor, Failure, PhaseEvent, RunOutcome, RunRequest};
