//! The budgeted optimisation loop, its baselines and the evaluation protocols.

mod baselines;
pub mod benchmark;
mod bo;
mod budget;
mod gait;
pub mod history;
mod nelder_mead;

pub use baselines::{grid_oracle, lattice, random_search};
pub use bo::{posterior_table, run_bo, BoConfig, GridPrediction, BoFailure, EvalOutcome, Evaluation, Evaluator, Incumbent, IterationRecord, RunHistory};
pub use budget::Budget;
pub use gait::{
    evaluate_improvement, push_test, real_cost_estimate, GaitEvaluator, Improvement, Objective, PushTestResult,
    PushTrial, DEFAULT_PUSH_LADDER, PUSH_TIME,
};
pub use nelder_mead::{nelder_mead, NelderMeadResult};
