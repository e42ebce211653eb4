use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalOutcome, Evaluation, Evaluator};
use crate::error::{Error, Result};
use crate::gait_sim::{push_impulse, rollout, CostReport, GaitParams, GaitProblem, Push};
use crate::kernels::Fidelity;
use crate::rng;

/// Which deviation integrals make up the optimised cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Alpha,
    AlphaBeta,
}

impl Objective {
    pub fn cost(self, r: &CostReport) -> f64 {
        match self {
            Objective::Alpha => r.j_alpha,
            Objective::AlphaBeta => r.j_alpha + r.j_beta,
        }
    }

    /// The cost without the gain penalty.
    pub fn deviation(self, r: &CostReport) -> f64 {
        match self {
            Objective::Alpha => r.j_alpha - r.penalty,
            Objective::AlphaBeta => r.j_alpha + r.j_beta - 2.0 * r.penalty,
        }
    }
}

/// Evaluates unit-box points on the gait problem: simulation costs average
/// `sim_repeats` rollouts, real costs are a single surrogate-real rollout.
#[derive(Debug, Clone)]
pub struct GaitEvaluator<'a> {
    pub problem: &'a GaitProblem,
    pub objective: Objective,
    pub sim_repeats: u32,
    pub seed: u64,
}

impl<'a> GaitEvaluator<'a> {
    pub fn new(problem: &'a GaitProblem, objective: Objective, sim_repeats: u32, seed: u64) -> Self {
        GaitEvaluator { problem, objective, sim_repeats: sim_repeats.max(1), seed }
    }

    pub fn gains(&self, x: &[f64]) -> GaitParams {
        GaitParams::from_unit(x, &self.problem.bounds)
    }

    /// The individual rollouts behind evaluation number `index`.
    pub fn reports(&self, x: &[f64], fidelity: Fidelity, index: usize) -> Vec<CostReport> {
        let gains = self.gains(x);
        let seed = rng::derive_seed(self.seed, "evaluation", index as u64);
        match fidelity {
            Fidelity::Simulation => {
                crate::gait_sim::simulated_reports(self.problem, &gains, self.sim_repeats as usize, seed)
            }
            Fidelity::Real => vec![rollout(self.problem, &gains, Fidelity::Real, seed)],
        }
    }

    pub fn summarize(&self, reports: &[CostReport]) -> Evaluation {
        let n = reports.len().max(1);
        Evaluation {
            cost: reports.iter().map(|r| self.objective.cost(r)).sum::<f64>() / n as f64,
            repeats: n as u32,
            falls: reports.iter().filter(|r| r.fell).count() as u32,
            elapsed_s: n as f64 * self.problem.sequence.duration(),
        }
    }
}

impl Evaluator for GaitEvaluator<'_> {
    fn evaluate(&mut self, x: &[f64], fidelity: Fidelity, index: usize) -> Result<EvalOutcome> {
        let reports = self.reports(x, fidelity, index);
        Ok(EvalOutcome::Cost(self.summarize(&reports)))
    }
}

fn episode_seed(seed: u64, i: usize) -> u64 {
    rng::derive_seed(seed, "episode", i as u64)
}

/// Mean surrogate-real cost over `episodes` rollouts with seeds fixed by
/// `seed`, so different gains are compared on the same noise.
pub fn real_cost_estimate(problem: &GaitProblem, gains: &GaitParams, objective: Objective, episodes: usize, seed: u64) -> f64 {
    let total: f64 = (0..episodes.max(1))
        .into_par_iter()
        .map(|i| objective.cost(&rollout(problem, gains, Fidelity::Real, episode_seed(seed, i))))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / episodes.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mean_default: f64,
    pub mean_optimized: f64,
    pub reduction_fraction: f64,
}

/// Before/after comparison on surrogate-real episodes with paired seeds,
/// on the deviation term alone.
pub fn evaluate_improvement(
    problem: &GaitProblem,
    default_gains: &GaitParams,
    optimized_gains: &GaitParams,
    objective: Objective,
    episodes: usize,
    seed: u64,
) -> Result<Improvement> {
    if episodes == 0 {
        return Err(Error::invalid("episodes must be >= 1"));
    }
    let mean = |g: &GaitParams| {
        (0..episodes)
            .map(|i| objective.deviation(&rollout(problem, g, Fidelity::Real, episode_seed(seed, i))))
            .sum::<f64>()
            / episodes as f64
    };
    let mean_default = mean(default_gains);
    let mean_optimized = mean(optimized_gains);
    Ok(Improvement { mean_default, mean_optimized, reduction_fraction: 1.0 - mean_optimized / mean_default })
}

pub const DEFAULT_PUSH_LADDER: [f64; 12] = [0.0, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4];

/// Time of the single push in a push test, s.
pub const PUSH_TIME: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushTrial {
    pub distance: f64,
    pub front_fell: bool,
    pub back_fell: bool,
}

impl PushTrial {
    pub fn withstood(&self) -> bool {
        !self.front_fell && !self.back_fell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushTestResult {
    pub trials: Vec<PushTrial>,
    /// Largest distance withstood from both sides, if any.
    pub max_withstood: Option<f64>,
}

/// Push the robot once at [`PUSH_TIME`] from behind and from the front for
/// every distance in `ladder`. All rollouts share one seed.
pub fn push_test(
    problem: &GaitProblem,
    gains: &GaitParams,
    ladder: &[f64],
    fidelity: Fidelity,
    seed: u64,
) -> Result<PushTestResult> {
    for &d in ladder {
        push_impulse(d, problem.plant.push_coeff)?;
    }
    let trials: Vec<PushTrial> = ladder
        .par_iter()
        .map(|&d| {
            let fell = |direction: f64| {
                let p = problem.with_pushes(vec![Push { time: PUSH_TIME, distance: d, direction }]);
                rollout(&p, gains, fidelity, seed).fell
            };
            PushTrial { distance: d, front_fell: fell(-1.0), back_fell: fell(1.0) }
        })
        .collect();
    let max_withstood = trials.iter().filter(|t| t.withstood()).map(|t| t.distance).reduce(f64::max);
    Ok(PushTestResult { trials, max_withstood })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait_sim::{simulated_cost, GainBounds};

    #[test]
    fn evaluator_matches_direct_rollouts() {
        let problem = GaitProblem::default();
        let mut ev = GaitEvaluator::new(&problem, Objective::Alpha, 4, 3);
        let x = [0.6, 0.4];
        let g = ev.gains(&x);
        let seed = rng::derive_seed(3, "evaluation", 7);
        let EvalOutcome::Cost(sim) = ev.evaluate(&x, Fidelity::Simulation, 7).unwrap() else { panic!() };
        assert_eq!(sim.cost, simulated_cost(&problem, &g, 4, seed).0);
        assert_eq!((sim.repeats, sim.elapsed_s), (4, 80.0));
        let EvalOutcome::Cost(real) = ev.evaluate(&x, Fidelity::Real, 7).unwrap() else { panic!() };
        assert_eq!(real.cost, rollout(&problem, &g, Fidelity::Real, seed).j_alpha);
        assert_eq!(real.repeats, 1);
    }

    #[test]
    fn identical_gains_show_no_improvement() {
        let problem = GaitProblem::default();
        let g = problem.bounds.midpoint();
        let imp = evaluate_improvement(&problem, &g, &g, Objective::Alpha, 5, 11).unwrap();
        assert_eq!(imp.reduction_fraction, 0.0);
        assert!(evaluate_improvement(&problem, &g, &g, Objective::Alpha, 0, 11).is_err());
    }

    #[test]
    fn stiffer_gains_improve_on_the_midpoint() {
        let problem = GaitProblem::default();
        let imp = evaluate_improvement(
            &problem,
            &problem.bounds.midpoint(),
            &GaitParams::new(4.5, 1.25),
            Objective::Alpha,
            5,
            2,
        )
        .unwrap();
        assert!(imp.reduction_fraction > 0.1, "{imp:?}");
        assert!(imp.mean_optimized < imp.mean_default);
    }

    #[test]
    fn push_test_reports_every_rung() {
        let problem = GaitProblem::default();
        let stable = push_test(&problem, &GaitParams::new(4.0, 1.0), &DEFAULT_PUSH_LADDER, Fidelity::Real, 0).unwrap();
        assert_eq!(stable.trials.len(), DEFAULT_PUSH_LADDER.len());
        assert!(stable.trials[0].withstood());
        assert!(DEFAULT_PUSH_LADDER.contains(&0.8));
        let passive = push_test(&problem, &GaitParams::new(0.0, 0.0), &[0.0, 0.8], Fidelity::Simulation, 0).unwrap();
        assert_eq!(passive.max_withstood, None);
        assert!(push_test(&problem, &GaitParams::new(1.0, 1.0), &[1.6], Fidelity::Real, 0).is_err());
    }

    #[test]
    fn alpha_beta_objective_sums_both_planes() {
        let problem = GaitProblem { bounds: GainBounds::default(), ..GaitProblem::default() };
        let r = rollout(&problem, &GaitParams::new(3.0, 0.5), Fidelity::Simulation, 1);
        assert_eq!(Objective::AlphaBeta.cost(&r), r.j_alpha + r.j_beta);
        assert!((Objective::AlphaBeta.deviation(&r) + 2.0 * r.penalty - Objective::AlphaBeta.cost(&r)).abs() < 1e-12);
    }
}
