use serde::{Deserialize, Serialize};

use super::Budget;
use crate::acquisition::{make_grid, score_candidates, AcquisitionConfig};
use crate::error::{Error, Result};
use crate::gp::{optimize_hyperparameters, GpModel, HyperBounds, HyperFitOptions, NoiseConfig, Observation};
use crate::kernels::{AugmentedParam, CompositeKernelConfig, Fidelity, ParamVector};
use crate::rng;
use crate::sampling::{halton, BoxBounds};

/// One cost measurement returned by an [`Evaluator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    /// Rollouts averaged into `cost`.
    pub repeats: u32,
    /// How many of those rollouts fell.
    pub falls: u32,
    /// Experiment time consumed, s.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalOutcome {
    Cost(Evaluation),
    /// Decline this candidate; the loop re-selects without charging the budget.
    Skip,
    Abort,
}

/// Source of costs at either fidelity. `x` lies in the unit box.
pub trait Evaluator {
    fn evaluate(&mut self, x: &[f64], fidelity: Fidelity, index: usize) -> Result<EvalOutcome>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    pub initial_design: usize,
    pub budget: Budget,
    pub acquisition: AcquisitionConfig,
    pub noise: NoiseConfig,
    pub hyper_bounds: HyperBounds,
    pub hyper_fit: HyperFitOptions,
    /// Iterations the incumbent must stay put before stopping early.
    pub stall_window: usize,
    pub stall_tolerance: f64,
    /// Candidates skipped in one iteration before real evaluations are
    /// withheld for the rest of it.
    pub max_skips: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            initial_design: 8,
            budget: Budget::default(),
            acquisition: AcquisitionConfig::default(),
            noise: NoiseConfig::default(),
            hyper_bounds: HyperBounds::default(),
            hyper_fit: HyperFitOptions::default(),
            stall_window: 10,
            stall_tolerance: 1e-3,
            max_skips: 3,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        self.noise.validate()?;
        self.hyper_bounds.validate()?;
        if self.budget.max_total == 0 {
            return Err(Error::invalid("max_total must be >= 1"));
        }
        if self.budget.max_real > self.budget.max_total {
            return Err(Error::invalid("max_real must not exceed max_total"));
        }
        if !(self.stall_tolerance.is_finite() && self.stall_tolerance >= 0.0) {
            return Err(Error::invalid("stall_tolerance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub fidelity: Fidelity,
    pub x: Vec<f64>,
    pub cost: f64,
    pub repeats: u32,
    pub falls: u32,
    /// Entropy of the minimiser distribution before this evaluation and its
    /// expected value after it. Absent for the initial design.
    pub entropy_before: Option<f64>,
    pub entropy_after: Option<f64>,
    pub real_used: usize,
    pub total_used: usize,
    pub elapsed_s: f64,
}

impl IterationRecord {
    pub fn observation(&self) -> Result<Observation> {
        let a = AugmentedParam::new(ParamVector::new(self.x.clone())?, self.fidelity);
        Ok(Observation::new(a, self.cost, self.repeats))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub predicted_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub seed: u64,
    pub dim: usize,
    pub records: Vec<IterationRecord>,
    pub incumbent: Option<Incumbent>,
    /// Kernel of the final model the incumbent was read from.
    pub kernel: Option<CompositeKernelConfig>,
    pub budget: Budget,
    pub stopped_early: bool,
}

impl RunHistory {
    pub fn observations(&self) -> Result<Vec<Observation>> {
        self.records.iter().map(IterationRecord::observation).collect()
    }

    pub fn real_falls(&self) -> u32 {
        self.records.iter().filter(|r| r.fidelity == Fidelity::Real).map(|r| r.falls).sum()
    }
}

/// A run that stopped on an error, with everything recorded up to that point.
#[derive(Debug)]
pub struct BoFailure {
    pub error: Error,
    pub history: RunHistory,
}

/// Costs rescaled to zero mean and unit standard deviation.
pub(crate) struct Standardized {
    pub observations: Vec<Observation>,
    pub mean: f64,
    pub scale: f64,
}

pub(crate) fn standardize(observations: &[Observation]) -> Standardized {
    let n = observations.len().max(1) as f64;
    let mean = observations.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = observations.iter().map(|o| (o.cost - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let observations = observations
        .iter()
        .map(|o| Observation { cost: (o.cost - mean) / scale, ..o.clone() })
        .collect();
    Standardized { observations, mean, scale }
}

/// Posterior-mean argmin over the real-fidelity grid, in cost units.
pub(crate) fn incumbent_on_grid(
    observations: &[Observation],
    kernel: &CompositeKernelConfig,
    noise: &NoiseConfig,
    grid: &[AugmentedParam],
) -> Result<Incumbent> {
    let std = standardize(observations);
    let model = GpModel::fit(&std.observations, kernel, noise)?;
    incumbent_from_model(&model, &std, grid)
}

fn incumbent_from_model(model: &GpModel, std: &Standardized, grid: &[AugmentedParam]) -> Result<Incumbent> {
    let means = model.predict_mean(grid)?;
    let mut best = 0;
    for (i, m) in means.iter().enumerate() {
        if *m < means[best] {
            best = i;
        }
    }
    Ok(Incumbent { x: grid[best].x().values().to_vec(), predicted_cost: std.mean + std.scale * means[best] })
}

/// Fit hyperparameters when there is enough data, otherwise keep `kernel`.
fn refit(
    observations: &[Observation],
    kernel: &CompositeKernelConfig,
    cfg: &BoConfig,
    seed: u64,
) -> Result<CompositeKernelConfig> {
    if observations.len() < 3 {
        return Ok(kernel.clone());
    }
    let options = HyperFitOptions { initial: Some(kernel.clone()), ..cfg.hyper_fit.clone() };
    optimize_hyperparameters(observations, &cfg.hyper_bounds, &cfg.noise, &options, seed)
}

/// Budgeted sim-to-real Bayesian optimisation over the unit box of dimension `dim`.
///
/// A low-discrepancy simulation design seeds the model. Each iteration then
/// refits the kernel, scores every grid location at every affordable fidelity
/// by expected entropy reduction per unit cost, and evaluates the best one.
/// The run ends when the budget is spent, or when real evaluations are used up
/// and the incumbent's predicted cost has stalled.
pub fn run_bo(
    evaluator: &mut dyn Evaluator,
    dim: usize,
    cfg: &BoConfig,
    seed: u64,
) -> std::result::Result<RunHistory, Box<BoFailure>> {
    let mut history = RunHistory {
        seed,
        dim,
        records: Vec::new(),
        incumbent: None,
        kernel: None,
        budget: Budget::new(cfg.budget.max_real, cfg.budget.max_total),
        stopped_early: false,
    };
    match drive(evaluator, dim, cfg, seed, &mut history) {
        Ok(()) => Ok(history),
        Err(error) => Err(Box::new(BoFailure { error, history })),
    }
}

fn drive(evaluator: &mut dyn Evaluator, dim: usize, cfg: &BoConfig, seed: u64, h: &mut RunHistory) -> Result<()> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let grid = make_grid(&BoxBounds::unit(dim), cfg.acquisition.grid_size, Fidelity::Real)?;
    let mut elapsed = 0.0;
    let mut observations: Vec<Observation> = Vec::new();

    let mut record = |h: &mut RunHistory,
                      obs: &mut Vec<Observation>,
                      a: &AugmentedParam,
                      e: Evaluation,
                      entropy: Option<(f64, f64)>|
     -> Result<()> {
        if !e.cost.is_finite() {
            return Err(Error::Evaluation(format!("non-finite cost {}", e.cost)));
        }
        h.budget.charge(a.fidelity())?;
        elapsed += e.elapsed_s;
        h.records.push(IterationRecord {
            iter: h.records.len(),
            fidelity: a.fidelity(),
            x: a.x().values().to_vec(),
            cost: e.cost,
            repeats: e.repeats.max(1),
            falls: e.falls,
            entropy_before: entropy.map(|p| p.0),
            entropy_after: entropy.map(|p| p.1),
            real_used: h.budget.used_real,
            total_used: h.budget.used_total,
            elapsed_s: elapsed,
        });
        obs.push(Observation::new(a.clone(), e.cost, e.repeats.max(1)));
        Ok(())
    };

    for u in halton(cfg.initial_design, dim, 1) {
        if !h.budget.allows(Fidelity::Simulation) {
            break;
        }
        let a = AugmentedParam::new(ParamVector::new(u)?, Fidelity::Simulation);
        match evaluator.evaluate(a.x().values(), Fidelity::Simulation, h.records.len())? {
            EvalOutcome::Cost(e) => record(h, &mut observations, &a, e, None)?,
            EvalOutcome::Skip => continue,
            EvalOutcome::Abort => return Err(Error::Aborted),
        }
    }
    if observations.is_empty() {
        return Err(Error::invalid("the initial design produced no observations"));
    }

    let mut kernel = CompositeKernelConfig::default_for_dim(dim);
    let mut incumbent_costs: Vec<f64> = Vec::new();
    let mut iteration = 0u64;
    while !h.budget.exhausted() {
        let std = standardize(&observations);
        kernel = refit(&std.observations, &kernel, cfg, rng::derive_seed(seed, "hyper", iteration))?;
        let model = GpModel::fit(&std.observations, &kernel, &cfg.noise)?;

        let inc = incumbent_from_model(&model, &std, &grid)?;
        incumbent_costs.push(inc.predicted_cost);
        if h.budget.real_exhausted() && incumbent_costs.len() > cfg.stall_window {
            let tail = &incumbent_costs[incumbent_costs.len() - cfg.stall_window - 1..];
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < cfg.stall_tolerance {
                h.stopped_early = true;
                break;
            }
        }

        let scores =
            score_candidates(&model, &grid, &h.budget, &cfg.acquisition, rng::derive_seed(seed, "acquisition", iteration))?;
        let mut excluded: Vec<usize> = Vec::new();
        let mut evaluated = false;
        loop {
            let withhold_real = excluded.len() >= cfg.max_skips;
            let pick = scores.best_excluding(|c| {
                (withhold_real && c.fidelity() == Fidelity::Real)
                    || excluded.iter().any(|&k| &scores.candidates[k] == c)
            });
            let Some(k) = pick else { break };
            let a = &scores.candidates[k];
            match evaluator.evaluate(a.x().values(), a.fidelity(), h.records.len())? {
                EvalOutcome::Cost(e) => {
                    let entropy = (scores.entropy_current, scores.entropy_current - scores.entropy_change[k]);
                    record(h, &mut observations, a, e, Some(entropy))?;
                    evaluated = true;
                    break;
                }
                EvalOutcome::Skip => excluded.push(k),
                EvalOutcome::Abort => return Err(Error::Aborted),
            }
        }
        if !evaluated {
            h.stopped_early = true;
            break;
        }
        iteration += 1;
    }

    let std = standardize(&observations);
    kernel = refit(&std.observations, &kernel, cfg, rng::derive_seed(seed, "hyper", iteration))?;
    h.incumbent = Some(incumbent_on_grid(&observations, &kernel, &cfg.noise, &grid)?);
    h.kernel = Some(kernel);
    Ok(())
}

/// Posterior mean and standard deviation, in cost units, of both fidelities
/// at one grid location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    pub x: Vec<f64>,
    pub mean_real: f64,
    pub std_real: f64,
    pub mean_sim: f64,
    pub std_sim: f64,
}

/// The final posterior of a run over its real-fidelity grid.
pub fn posterior_table(history: &RunHistory, noise: &NoiseConfig, grid_size: usize) -> Result<Vec<GridPrediction>> {
    let kernel = history.kernel.as_ref().ok_or_else(|| Error::invalid("run has no fitted kernel"))?;
    let std = standardize(&history.observations()?);
    let model = GpModel::fit(&std.observations, kernel, noise)?;
    let grid = make_grid(&BoxBounds::unit(history.dim), grid_size, Fidelity::Real)?;
    grid.iter()
        .map(|g| {
            let (mr, vr) = model.predict(g)?;
            let (ms, vs) = model.predict(&g.with_fidelity(Fidelity::Simulation))?;
            Ok(GridPrediction {
                x: g.x().values().to_vec(),
                mean_real: std.mean + std.scale * mr,
                std_real: std.scale * vr.sqrt(),
                mean_sim: std.mean + std.scale * ms,
                std_sim: std.scale * vs.sqrt(),
            })
        })
        .collect()
}
