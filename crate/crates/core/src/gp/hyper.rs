use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lml_for, NoiseConfig, Observation};
use crate::error::{Error, Result};
use crate::kernels::{AugmentedParam, CompositeKernelConfig, Fidelity, RqConfig};
use crate::optimizer::nelder_mead;
use crate::rng;

/// Search intervals for each kernel hyperparameter. An interval with equal
/// ends pins the hyperparameter. Length-scale intervals apply to every
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperBounds {
    pub signal_variance: (f64, f64),
    pub length_scale: (f64, f64),
    pub shape_alpha: (f64, f64),
    pub err_signal_variance: (f64, f64),
    pub err_length_scale: (f64, f64),
    pub err_shape_alpha: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            signal_variance: (0.05, 20.0),
            length_scale: (0.05, 2.0),
            shape_alpha: (2.0, 2.0),
            err_signal_variance: (0.005, 2.0),
            err_length_scale: (0.3, 2.0),
            err_shape_alpha: (2.0, 2.0),
        }
    }
}

impl HyperBounds {
    fn intervals(&self) -> [(&'static str, (f64, f64)); 6] {
        [
            ("signal_variance", self.signal_variance),
            ("length_scale", self.length_scale),
            ("shape_alpha", self.shape_alpha),
            ("err_signal_variance", self.err_signal_variance),
            ("err_length_scale", self.err_length_scale),
            ("err_shape_alpha", self.err_shape_alpha),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.intervals() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::invalid(format!("{name} bounds must satisfy 0 < lo <= hi")));
            }
        }
        Ok(())
    }

    /// Centre of the box in log space, used when no start point is given.
    pub fn log_center(&self, dim: usize) -> CompositeKernelConfig {
        let c = |(lo, hi): (f64, f64)| (lo * hi).sqrt();
        CompositeKernelConfig {
            sim_kernel: RqConfig::isotropic(dim, c(self.signal_variance), c(self.length_scale), c(self.shape_alpha)),
            err_kernel: RqConfig::isotropic(
                dim,
                c(self.err_signal_variance),
                c(self.err_length_scale),
                c(self.err_shape_alpha),
            ),
            real_real_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperFitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    /// First start point; later restarts are drawn log-uniformly.
    #[serde(skip)]
    pub initial: Option<CompositeKernelConfig>,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        HyperFitOptions { restarts: 2, max_iters: 150, tolerance: 1e-6, initial: None }
    }
}

/// Which hyperparameters move, and how a log-space vector maps to a config.
struct Layout {
    dim: usize,
    bounds: [(f64, f64); 6],
    free: [bool; 6],
    gain: f64,
}

impl Layout {
    fn slots(&self, slot: usize) -> usize {
        if slot == 1 || slot == 4 {
            self.dim
        } else {
            1
        }
    }

    fn encode(&self, cfg: &CompositeKernelConfig) -> Vec<f64> {
        let mut v = Vec::new();
        let values = Self::flatten(cfg);
        let mut offset = 0;
        for slot in 0..6 {
            let k = self.slots(slot);
            if self.free[slot] {
                v.extend(values[offset..offset + k].iter().map(|x| x.ln()));
            }
            offset += k;
        }
        v
    }

    fn flatten(cfg: &CompositeKernelConfig) -> Vec<f64> {
        let mut v = vec![cfg.sim_kernel.signal_variance];
        v.extend(&cfg.sim_kernel.length_scales);
        v.push(cfg.sim_kernel.shape_alpha);
        v.push(cfg.err_kernel.signal_variance);
        v.extend(&cfg.err_kernel.length_scales);
        v.push(cfg.err_kernel.shape_alpha);
        v
    }

    /// Decode a log vector, clamping into the bounds; pinned slots come from `base`.
    fn decode(&self, theta: &[f64], base: &CompositeKernelConfig) -> CompositeKernelConfig {
        let base_values = Self::flatten(base);
        let mut values = Vec::with_capacity(base_values.len());
        let mut it = theta.iter();
        let mut offset = 0;
        for slot in 0..6 {
            let (lo, hi) = self.bounds[slot];
            for i in 0..self.slots(slot) {
                let v = if self.free[slot] {
                    it.next().expect("theta length matches layout").exp()
                } else {
                    base_values[offset + i]
                };
                values.push(v.clamp(lo, hi));
            }
            offset += self.slots(slot);
        }
        let d = self.dim;
        CompositeKernelConfig {
            sim_kernel: RqConfig {
                signal_variance: values[0],
                length_scales: values[1..1 + d].to_vec(),
                shape_alpha: values[1 + d],
            },
            err_kernel: RqConfig {
                signal_variance: values[2 + d],
                length_scales: values[3 + d..3 + 2 * d].to_vec(),
                shape_alpha: values[3 + 2 * d],
            },
            real_real_gain: self.gain,
        }
    }

    fn random_start(&self, rng: &mut impl Rng, base: &CompositeKernelConfig) -> Vec<f64> {
        let mut theta = Vec::new();
        for slot in 0..6 {
            if !self.free[slot] {
                continue;
            }
            let (lo, hi) = self.bounds[slot];
            for _ in 0..self.slots(slot) {
                theta.push(rng.random_range(lo.ln()..=hi.ln()));
            }
        }
        debug_assert_eq!(theta.len(), self.encode(base).len());
        theta
    }
}

/// Maximise the log marginal likelihood over kernel hyperparameters with
/// Nelder-Mead in log space, from `restarts` seeded starts. Noise stays fixed.
///
/// Error-kernel hyperparameters only move when at least one observation is
/// real; otherwise they cannot affect the likelihood and keep their start values.
pub fn optimize_hyperparameters(
    observations: &[Observation],
    bounds: &HyperBounds,
    noise: &NoiseConfig,
    options: &HyperFitOptions,
    seed: u64,
) -> Result<CompositeKernelConfig> {
    if observations.len() < 3 {
        return Err(Error::invalid("hyperparameter fitting needs at least 3 observations"));
    }
    if let Some(o) = observations.iter().find(|o| !o.cost.is_finite()) {
        return Err(Error::invalid(format!("non-finite cost {}", o.cost)));
    }
    bounds.validate()?;
    noise.validate()?;
    let dim = observations[0].a.x().dim();
    if observations.iter().any(|o| o.a.x().dim() != dim) {
        return Err(Error::invalid("observations have inconsistent dimensions"));
    }

    let has_real = observations.iter().any(|o| o.a.fidelity() == Fidelity::Real);
    let ivals = bounds.intervals().map(|(_, b)| b);
    let mut free = ivals.map(|(lo, hi)| lo < hi);
    if !has_real {
        free[3] = false;
        free[4] = false;
        free[5] = false;
    }
    let start_cfg = options.initial.clone().unwrap_or_else(|| bounds.log_center(dim));
    if start_cfg.dim() != dim {
        return Err(Error::invalid("initial kernel dimension does not match observations"));
    }
    let layout = Layout { dim, bounds: ivals, free, gain: start_cfg.real_real_gain };

    let points: Vec<AugmentedParam> = observations.iter().map(|o| o.a.clone()).collect();
    let noise_diag: Vec<f64> = observations.iter().map(|o| noise.variance(o.a.fidelity(), o.repeats)).collect();
    let targets = DVector::from_iterator(observations.len(), observations.iter().map(|o| o.cost));
    let objective = |theta: &[f64]| -> f64 {
        let cfg = layout.decode(theta, &start_cfg);
        match lml_for(&points, &noise_diag, &targets, &cfg, noise.jitter) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    };

    let theta0 = layout.encode(&layout.decode(&layout.encode(&start_cfg), &start_cfg));
    if theta0.is_empty() {
        return Ok(layout.decode(&theta0, &start_cfg));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "hyper", 0));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..options.restarts.max(1) {
        let start = if r == 0 { theta0.clone() } else { layout.random_start(&mut rng, &start_cfg) };
        let Ok(res) = nelder_mead(objective, &start, 0.5, options.tolerance, options.max_iters) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, f)| res.f < *f) {
            best = Some((res.x, res.f));
        }
    }
    match best {
        Some((theta, _)) => Ok(layout.decode(&theta, &start_cfg)),
        None => Err(Error::numerical("every hyperparameter restart failed to factorise")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpModel;
    use crate::kernels::{kernel_matrix, ParamVector};
    use nalgebra::{Cholesky, DMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sim_point(x: f64) -> AugmentedParam {
        AugmentedParam::new(ParamVector::new(vec![x]).unwrap(), Fidelity::Simulation)
    }

    fn truth() -> CompositeKernelConfig {
        CompositeKernelConfig {
            sim_kernel: RqConfig::isotropic(1, 1.0, 0.2, 2.0),
            err_kernel: RqConfig::isotropic(1, 0.1, 0.5, 2.0),
            real_real_gain: 1.0,
        }
    }

    fn synthetic(seed: u64, n: usize, noise: &NoiseConfig) -> Vec<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = (0..n).map(|_| sim_point(rng.random_range(0.0..1.0))).collect();
        let mut k = kernel_matrix(&pts, &truth()).unwrap();
        for i in 0..n {
            k[(i, i)] += noise.sim_noise_variance + 1e-9;
        }
        let l = Cholesky::new(k).unwrap().unpack();
        let z = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let y = l * z;
        pts.into_iter().enumerate().map(|(i, a)| Observation::new(a, y[i], 1)).collect()
    }

    fn lml(obs: &[Observation], k: &CompositeKernelConfig, noise: &NoiseConfig) -> f64 {
        GpModel::fit(obs, k, noise).unwrap().log_marginal_likelihood()
    }

    fn bounds_1d() -> HyperBounds {
        HyperBounds { length_scale: (0.02, 2.0), ..HyperBounds::default() }
    }

    #[test]
    fn recovers_length_scale_of_generating_kernel() {
        let noise = NoiseConfig { sim_noise_variance: 1e-3, real_noise_variance: 1e-3, jitter: 1e-9 };
        let opts = HyperFitOptions { restarts: 3, max_iters: 300, ..HyperFitOptions::default() };
        let hits = (0..10)
            .filter(|&s| {
                let obs = synthetic(100 + s, 30, &noise);
                let fitted = optimize_hyperparameters(&obs, &bounds_1d(), &noise, &opts, s).unwrap();
                let l = fitted.sim_kernel.length_scales[0];
                (0.1..=0.4).contains(&l)
            })
            .count();
        assert!(hits >= 8, "length scale recovered in {hits}/10 seeds");
    }

    #[test]
    fn ascent_from_truth() {
        let noise = NoiseConfig { sim_noise_variance: 1e-2, real_noise_variance: 1e-2, jitter: 1e-9 };
        let obs = synthetic(7, 20, &noise);
        let opts = HyperFitOptions { restarts: 1, initial: Some(truth()), ..HyperFitOptions::default() };
        let fitted = optimize_hyperparameters(&obs, &bounds_1d(), &noise, &opts, 1).unwrap();
        assert!(lml(&obs, &fitted, &noise) >= lml(&obs, &truth(), &noise));
        // No real observations: the error kernel is left where it started.
        assert_eq!(fitted.err_kernel, truth().err_kernel);
    }

    #[test]
    fn constant_costs_push_signal_variance_down() {
        let noise = NoiseConfig { sim_noise_variance: 0.05, real_noise_variance: 0.05, jitter: 1e-9 };
        let obs: Vec<_> = (0..8).map(|i| Observation::new(sim_point(i as f64 / 7.0), 0.1, 1)).collect();
        let start = truth();
        let opts = HyperFitOptions { restarts: 2, initial: Some(start.clone()), ..HyperFitOptions::default() };
        let bounds = bounds_1d();
        let fitted = optimize_hyperparameters(&obs, &bounds, &noise, &opts, 3).unwrap();
        assert!(lml(&obs, &fitted, &noise) >= lml(&obs, &start, &noise));
        assert!(fitted.sim_kernel.signal_variance < start.sim_kernel.signal_variance);
        assert!(fitted.sim_kernel.signal_variance < 10.0 * bounds.signal_variance.0);
    }

    #[test]
    fn returned_config_stays_in_bounds() {
        let noise = NoiseConfig::default();
        let mut obs = synthetic(9, 12, &noise);
        for o in obs.iter_mut().step_by(3) {
            o.a = o.a.with_fidelity(Fidelity::Real);
        }
        let b = bounds_1d();
        let fitted = optimize_hyperparameters(&obs, &b, &noise, &HyperFitOptions::default(), 2).unwrap();
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        assert!(within(fitted.sim_kernel.signal_variance, b.signal_variance));
        assert!(within(fitted.err_kernel.signal_variance, b.err_signal_variance));
        assert!(fitted.err_kernel.length_scales.iter().all(|&l| within(l, b.err_length_scale)));
        assert_eq!(fitted.sim_kernel.shape_alpha, 2.0);
    }

    #[test]
    fn too_few_observations() {
        let obs: Vec<_> = (0..2).map(|i| Observation::new(sim_point(i as f64), 0.0, 1)).collect();
        let r = optimize_hyperparameters(&obs, &HyperBounds::default(), &NoiseConfig::default(), &HyperFitOptions::default(), 0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
