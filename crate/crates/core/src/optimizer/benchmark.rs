use serde::{Deserialize, Serialize};

use super::gait::{evaluate_improvement, real_cost_estimate, GaitEvaluator, Improvement, Objective};
use super::{grid_oracle, random_search, run_bo, BoConfig, BoFailure, RunHistory};
use crate::error::Result;
use crate::gait_sim::{GaitParams, GaitProblem};
use crate::kernels::Fidelity;
use crate::rng;

/// How benchmark incumbents are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Lattice points per axis of the oracle.
    pub oracle_resolution: usize,
    /// Surrogate-real episodes averaged into every scored cost.
    pub scoring_episodes: usize,
    /// Seed of the scoring episodes, shared by all methods and run seeds.
    pub scoring_seed: u64,
    pub improvement_episodes: usize,
    /// Relative gap to the oracle that still counts as a match.
    pub oracle_tolerance: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            oracle_resolution: 21,
            scoring_episodes: 16,
            scoring_seed: 0x5eed,
            improvement_episodes: 5,
            oracle_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub gains: GaitParams,
    pub cost: f64,
}

/// Lattice minimum of the scored surrogate-real cost.
pub fn oracle(problem: &GaitProblem, objective: Objective, cfg: &BenchmarkConfig) -> Result<OracleResult> {
    let (x, cost) = grid_oracle(
        |x| real_cost_estimate(problem, &GaitParams::new(x[0], x[1]), objective, cfg.scoring_episodes, cfg.scoring_seed),
        &problem.bounds.as_box(),
        cfg.oracle_resolution,
    )?;
    Ok(OracleResult { gains: GaitParams::new(x[0], x[1]), cost })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub bo_gains: GaitParams,
    pub bo_cost: f64,
    pub random_gains: GaitParams,
    pub random_cost: f64,
    pub improvement: Improvement,
    pub real_falls: u32,
    pub real_used: usize,
    pub total_used: usize,
    pub elapsed_s: f64,
}

/// One benchmark seed: a BO run, random search with the same number of real
/// evaluations, and the before/after protocol on the BO incumbent.
pub fn run_seed(
    problem: &GaitProblem,
    objective: Objective,
    bo: &BoConfig,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> std::result::Result<(SeedOutcome, RunHistory), Box<BoFailure>> {
    let mut evaluator = GaitEvaluator::new(problem, objective, bo.acquisition.sim_repeats, seed);
    let history = run_bo(&mut evaluator, 2, bo, seed)?;
    let fail = |error, history: &RunHistory| Box::new(BoFailure { error, history: history.clone() });
    let incumbent = history.incumbent.as_ref().expect("completed runs have an incumbent");
    let bo_gains = evaluator.gains(&incumbent.x);
    let score = |g: &GaitParams| real_cost_estimate(problem, g, objective, cfg.scoring_episodes, cfg.scoring_seed);

    let rs_seed = rng::derive_seed(seed, "random-search-eval", 0);
    let mut calls = 0u64;
    let (rx, _) = random_search(
        |x| {
            calls += 1;
            let g = GaitParams::new(x[0], x[1]);
            let r = crate::gait_sim::rollout(problem, &g, Fidelity::Real, rng::derive_seed(rs_seed, "eval", calls));
            objective.cost(&r)
        },
        &problem.bounds.as_box(),
        bo.budget.max_real.max(1),
        seed,
    )
    .map_err(|e| fail(e, &history))?;
    let random_gains = GaitParams::new(rx[0], rx[1]);

    let improvement = evaluate_improvement(
        problem,
        &problem.bounds.midpoint(),
        &bo_gains,
        objective,
        cfg.improvement_episodes,
        rng::derive_seed(seed, "improvement", 0),
    )
    .map_err(|e| fail(e, &history))?;

    let outcome = SeedOutcome {
        seed,
        bo_gains,
        bo_cost: score(&bo_gains),
        random_gains,
        random_cost: score(&random_gains),
        improvement,
        real_falls: history.real_falls(),
        real_used: history.budget.used_real,
        total_used: history.budget.used_total,
        elapsed_s: history.records.last().map_or(0.0, |r| r.elapsed_s),
    };
    Ok((outcome, history))
}
