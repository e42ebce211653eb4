//! Entropy-per-cost selection of the next evaluation point and fidelity.
//!
//! The distribution over the minimiser's location (`p_min`) is estimated on a
//! fixed candidate grid at real fidelity by counting the argmin of joint
//! posterior draws. The value of a candidate evaluation is the expected drop
//! in the entropy of `p_min` after conditioning on a fantasised observation.
//! Fantasies are applied to the posterior draws with the pathwise update
//! `f' = f + Σ[:, c] / (Σ[c, c] + noise) · (y − f(c) − ε)`, which yields exact
//! draws from the conditioned posterior without refactorising.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{cholesky_with_jitter, draw_gaussian, GpModel};
use crate::kernels::{AugmentedParam, Fidelity, ParamVector};
use crate::optimizer::Budget;
use crate::rng;
use crate::sampling::{stratified_design, BoxBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub grid_size: usize,
    pub mc_samples: usize,
    pub fantasy_draws: usize,
    pub cost_sim: f64,
    pub cost_real: f64,
    pub seed_stream: u64,
    /// Rollouts averaged into one simulation cost; scales the fantasy noise.
    pub sim_repeats: u32,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            grid_size: 200,
            mc_samples: 200,
            fantasy_draws: 10,
            cost_sim: 1.0,
            cost_real: 10.0,
            seed_stream: 0,
            sim_repeats: 4,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::invalid("grid_size must be >= 2"));
        }
        if self.mc_samples < 10 {
            return Err(Error::invalid("mc_samples must be >= 10"));
        }
        if self.fantasy_draws < 1 {
            return Err(Error::invalid("fantasy_draws must be >= 1"));
        }
        if !(self.cost_sim > 0.0 && self.cost_sim.is_finite()) {
            return Err(Error::invalid("cost_sim must be > 0"));
        }
        if !(self.cost_real > 0.0 && self.cost_real.is_finite()) {
            return Err(Error::invalid("cost_real must be > 0"));
        }
        if self.sim_repeats < 1 {
            return Err(Error::invalid("sim_repeats must be >= 1"));
        }
        Ok(())
    }

    pub fn cost(&self, fidelity: Fidelity) -> f64 {
        match fidelity {
            Fidelity::Simulation => self.cost_sim,
            Fidelity::Real => self.cost_real,
        }
    }

    fn repeats(&self, fidelity: Fidelity) -> u32 {
        match fidelity {
            Fidelity::Simulation => self.sim_repeats,
            Fidelity::Real => 1,
        }
    }
}

/// Probability that each grid index holds the minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct PminDistribution {
    probabilities: Vec<f64>,
}

impl PminDistribution {
    pub fn from_counts(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let probabilities = counts.iter().map(|&c| c as f64 / total as f64).collect();
        PminDistribution { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

pub fn make_grid(bounds: &BoxBounds, grid_size: usize, fidelity: Fidelity) -> Result<Vec<AugmentedParam>> {
    if grid_size < 2 {
        return Err(Error::invalid("grid_size must be >= 2"));
    }
    stratified_design(grid_size, bounds.dim())
        .into_iter()
        .map(|u| Ok(AugmentedParam::new(ParamVector::new(bounds.denormalize(&u))?, fidelity)))
        .collect()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &PminDistribution) -> f64 {
    -p.probabilities.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn entropy_of_counts(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    -counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        p * p.ln()
    }).sum::<f64>()
}

/// Index of the smallest value; ties resolve to the lowest index.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

pub fn pmin_distribution(model: &GpModel, grid: &[AugmentedParam], samples: usize, seed: u64) -> Result<PminDistribution> {
    let draws = model.sample_posterior(grid, samples, seed)?;
    let mut counts = vec![0usize; grid.len()];
    for row in draws.row_iter() {
        counts[argmin(row.iter().copied())] += 1;
    }
    Ok(PminDistribution::from_counts(&counts))
}

/// Joint posterior draws over the `p_min` grid plus any extra candidate
/// locations, shared by every candidate so score differences are not
/// swamped by Monte-Carlo noise.
struct PathBank {
    /// Row-major `samples × width`; the first `grid_len` columns are the grid.
    paths: Vec<f64>,
    width: usize,
    grid_len: usize,
    samples: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    entropy: f64,
}

impl PathBank {
    fn new(model: &GpModel, joint: &[AugmentedParam], grid_len: usize, samples: usize, seed: u64) -> Result<Self> {
        let (mean, cov) = model.posterior(joint)?;
        let (l, _) = cholesky_with_jitter(&cov, model.noise().jitter)?;
        let draws = draw_gaussian(&mean, &l, samples, seed);
        let width = joint.len();
        let mut paths = Vec::with_capacity(samples * width);
        for row in draws.row_iter() {
            paths.extend(row.iter().copied());
        }
        let mut counts = vec![0usize; grid_len];
        for s in 0..samples {
            counts[argmin(paths[s * width..s * width + grid_len].iter().copied())] += 1;
        }
        let entropy = entropy_of_counts(&counts, samples);
        Ok(PathBank { paths, width, grid_len, samples, mean, cov, entropy })
    }

    /// Expected entropy reduction from observing column `c` with noise variance `noise`.
    fn entropy_change(&self, c: usize, noise: f64, fantasies: usize, seed: u64) -> f64 {
        let denom = self.cov[(c, c)] + noise;
        if denom <= 1e-12 {
            return 0.0;
        }
        let weights: Vec<f64> = (0..self.grid_len).map(|g| self.cov[(g, c)] / denom).collect();
        let noise_sd = noise.sqrt();
        let pred_sd = denom.sqrt();
        let mut rng = rng::stream(seed);
        let mut counts = vec![0usize; self.grid_len];
        let mut total_entropy = 0.0;
        for _ in 0..fantasies {
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = self.mean[c] + pred_sd * z;
            counts.iter_mut().for_each(|v| *v = 0);
            for s in 0..self.samples {
                let row = &self.paths[s * self.width..(s + 1) * self.width];
                let eps: f64 = if noise_sd > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
                let shift = y - row[c] - noise_sd * eps;
                let idx = argmin(row[..self.grid_len].iter().zip(&weights).map(|(f, w)| f + w * shift));
                counts[idx] += 1;
            }
            total_entropy += entropy_of_counts(&counts, self.samples);
        }
        self.entropy - total_entropy / fantasies as f64
    }
}

fn check_grid(grid: &[AugmentedParam]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("candidate grid must be non-empty"));
    }
    Ok(())
}

fn real_grid(grid: &[AugmentedParam]) -> Vec<AugmentedParam> {
    grid.iter().map(|a| a.with_fidelity(Fidelity::Real)).collect()
}

pub fn expected_entropy_change(
    model: &GpModel,
    grid: &[AugmentedParam],
    candidate: &AugmentedParam,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    check_grid(grid)?;
    let grid = real_grid(grid);
    let (joint, col) = match grid.iter().position(|g| g == candidate) {
        Some(i) => (grid.clone(), i),
        None => {
            let mut j = grid.clone();
            j.push(candidate.clone());
            (j, grid.len())
        }
    };
    let seed = rng::derive_seed(seed, "acquisition", cfg.seed_stream);
    let bank = PathBank::new(model, &joint, grid.len(), cfg.mc_samples, rng::derive_seed(seed, "paths", 0))?;
    let noise = model.noise().variance(candidate.fidelity(), cfg.repeats(candidate.fidelity()));
    Ok(bank.entropy_change(col, noise, cfg.fantasy_draws, rng::derive_seed(seed, "fantasy", 0)))
}

/// Entropy-change scores for every budget-feasible candidate on a grid.
#[derive(Debug, Clone)]
pub struct CandidateScores {
    pub candidates: Vec<AugmentedParam>,
    pub entropy_change: Vec<f64>,
    pub utility: Vec<f64>,
    pub entropy_current: f64,
}

impl CandidateScores {
    /// Highest utility candidate not rejected by `excluded`. Candidates are
    /// ordered by grid index, simulation before real, so the first maximum
    /// implements the tie-breaking rule.
    pub fn best_excluding(&self, excluded: impl Fn(&AugmentedParam) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.candidates.iter().enumerate() {
            if excluded(c) {
                continue;
            }
            if best.is_none_or(|b| self.utility[i] > self.utility[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best(&self) -> Option<usize> {
        self.best_excluding(|_| false)
    }
}

/// Score every grid location at each fidelity the budget still allows.
pub fn score_candidates(
    model: &GpModel,
    grid: &[AugmentedParam],
    budget: &Budget,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<CandidateScores> {
    cfg.validate()?;
    check_grid(grid)?;
    let fidelities: Vec<Fidelity> = Fidelity::ALL.into_iter().filter(|&f| budget.allows(f)).collect();
    if fidelities.is_empty() {
        return Err(Error::BudgetExhausted);
    }
    let grid = real_grid(grid);
    let m = grid.len();
    let mut joint = grid.clone();
    let sim_offset = joint.len();
    if fidelities.contains(&Fidelity::Simulation) {
        joint.extend(grid.iter().map(|g| g.with_fidelity(Fidelity::Simulation)));
    }

    let seed = rng::derive_seed(seed, "acquisition", cfg.seed_stream);
    let bank = PathBank::new(model, &joint, m, cfg.mc_samples, rng::derive_seed(seed, "paths", 0))?;

    let mut candidates = Vec::with_capacity(m * fidelities.len());
    let mut columns = Vec::with_capacity(m * fidelities.len());
    for (i, g) in grid.iter().enumerate() {
        for &f in &fidelities {
            candidates.push(g.with_fidelity(f));
            columns.push(match f {
                Fidelity::Simulation => sim_offset + i,
                Fidelity::Real => i,
            });
        }
    }
    let entropy_change: Vec<f64> = candidates
        .par_iter()
        .zip(columns.par_iter())
        .enumerate()
        .map(|(k, (cand, &col))| {
            let f = cand.fidelity();
            let noise = model.noise().variance(f, cfg.repeats(f));
            bank.entropy_change(col, noise, cfg.fantasy_draws, rng::derive_seed(seed, "fantasy", k as u64))
        })
        .collect();
    let utility = candidates.iter().zip(&entropy_change).map(|(c, dh)| dh / cfg.cost(c.fidelity())).collect();
    Ok(CandidateScores { candidates, entropy_change, utility, entropy_current: bank.entropy })
}

/// Next evaluation on an explicit candidate grid.
pub fn select_from(
    model: &GpModel,
    grid: &[AugmentedParam],
    budget: &Budget,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<AugmentedParam> {
    let scores = score_candidates(model, grid, budget, cfg, seed)?;
    let best = scores.best().ok_or(Error::BudgetExhausted)?;
    Ok(scores.candidates[best].clone())
}

pub fn select_next(
    model: &GpModel,
    bounds: &BoxBounds,
    budget: &Budget,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<AugmentedParam> {
    let grid = make_grid(bounds, cfg.grid_size, Fidelity::Real)?;
    select_from(model, &grid, budget, cfg, seed)
}
