//! Gaussian-process regression over augmented parameters.
//!
//! The prior mean is zero; callers standardise costs before fitting. Noise is
//! per fidelity and divided by the number of rollouts averaged into a cost.

mod hyper;

pub use hyper::{optimize_hyperparameters, HyperBounds, HyperFitOptions};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, AugmentedParam, CompositeKernelConfig, Fidelity};
use crate::rng;

/// Largest jitter tried before a factorisation is declared failed.
pub const MAX_JITTER: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub a: AugmentedParam,
    pub cost: f64,
    pub repeats: u32,
}

impl Observation {
    pub fn new(a: AugmentedParam, cost: f64, repeats: u32) -> Self {
        Observation { a, cost, repeats }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sim_noise_variance: f64,
    pub real_noise_variance: f64,
    pub jitter: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sim_noise_variance: 1e-3, real_noise_variance: 1e-3, jitter: 1e-9 }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig { sim_noise_variance: 0.0, real_noise_variance: 0.0, jitter: 1e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.sim_noise_variance) {
            return Err(Error::invalid("sim_noise_variance must be >= 0"));
        }
        if !ok(self.real_noise_variance) {
            return Err(Error::invalid("real_noise_variance must be >= 0"));
        }
        if !(self.jitter.is_finite() && self.jitter > 0.0) {
            return Err(Error::invalid("jitter must be > 0"));
        }
        Ok(())
    }

    /// Observation noise variance of a cost averaged over `repeats` rollouts.
    pub fn variance(&self, fidelity: Fidelity, repeats: u32) -> f64 {
        let base = match fidelity {
            Fidelity::Simulation => self.sim_noise_variance,
            Fidelity::Real => self.real_noise_variance,
        };
        base / f64::from(repeats.max(1))
    }
}

/// Cholesky factor of `matrix + jitter * I`, escalating the jitter tenfold up
/// to [`MAX_JITTER`]. Returns the factor and the jitter that succeeded.
pub(crate) fn cholesky_with_jitter(matrix: &DMatrix<f64>, jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut j = jitter;
    loop {
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol.unpack(), j));
        }
        if j >= MAX_JITTER {
            return Err(Error::numerical(format!(
                "Cholesky factorisation failed with jitter up to {MAX_JITTER:e}"
            )));
        }
        j = (j * 10.0).min(MAX_JITTER);
    }
}

/// A fitted GP. Immutable; prediction and sampling borrow it.
#[derive(Debug, Clone)]
pub struct GpModel {
    observations: Vec<Observation>,
    points: Vec<AugmentedParam>,
    targets: DVector<f64>,
    kernel: CompositeKernelConfig,
    noise: NoiseConfig,
    chol: DMatrix<f64>,
    alpha_weights: DVector<f64>,
    jitter_used: f64,
}

impl GpModel {
    pub fn fit(observations: &[Observation], kernel: &CompositeKernelConfig, noise: &NoiseConfig) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("fit needs at least one observation"));
        }
        if let Some(o) = observations.iter().find(|o| !o.cost.is_finite()) {
            return Err(Error::invalid(format!("non-finite cost {}", o.cost)));
        }
        if observations.iter().any(|o| o.repeats == 0) {
            return Err(Error::invalid("repeats must be >= 1"));
        }
        kernel.validate()?;
        noise.validate()?;
        let points: Vec<AugmentedParam> = observations.iter().map(|o| o.a.clone()).collect();
        kernels::check_points(&points, kernel)?;

        let mut k = kernels::kernel_matrix_unchecked(&points, kernel);
        for (i, o) in observations.iter().enumerate() {
            k[(i, i)] += noise.variance(o.a.fidelity(), o.repeats);
        }
        let (chol, jitter_used) = cholesky_with_jitter(&k, noise.jitter)?;
        let targets = DVector::from_iterator(observations.len(), observations.iter().map(|o| o.cost));
        let alpha_weights = solve_chol(&chol, &targets);

        Ok(GpModel {
            observations: observations.to_vec(),
            points,
            targets,
            kernel: kernel.clone(),
            noise: *noise,
            chol,
            alpha_weights,
            jitter_used,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn kernel(&self) -> &CompositeKernelConfig {
        &self.kernel
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Lower-triangular factor of `K + noise + jitter * I`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha_weights(&self) -> &DVector<f64> {
        &self.alpha_weights
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Posterior mean and variance of the latent cost at `a`.
    pub fn predict(&self, a: &AugmentedParam) -> Result<(f64, f64)> {
        kernels::check_points(std::slice::from_ref(a), &self.kernel)?;
        let kx = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| self.kernel.eval(p, a)));
        let mean = kx.dot(&self.alpha_weights);
        let v = self
            .chol
            .solve_lower_triangular(&kx)
            .ok_or_else(|| Error::numerical("triangular solve failed"))?;
        let var = self.kernel.eval(a, a) - v.norm_squared();
        Ok((mean, clamp_variance(var)))
    }

    /// Posterior means at many points; skips the variance solve.
    pub fn predict_mean(&self, points: &[AugmentedParam]) -> Result<Vec<f64>> {
        kernels::check_points(points, &self.kernel)?;
        Ok(points
            .iter()
            .map(|a| self.points.iter().zip(self.alpha_weights.iter()).map(|(p, w)| self.kernel.eval(p, a) * w).sum())
            .collect())
    }

    /// Joint posterior mean vector and covariance matrix over `points`.
    pub fn posterior(&self, points: &[AugmentedParam]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        kernels::check_points(points, &self.kernel)?;
        let cross = kernels::cross_matrix(&self.points, points, &self.kernel);
        let mean = cross.tr_mul(&self.alpha_weights);
        let v = self
            .chol
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::numerical("triangular solve failed"))?;
        let mut cov = kernels::kernel_matrix_unchecked(points, &self.kernel);
        cov.gemm_tr(-1.0, &v, &v, 1.0);
        // Restore exact symmetry lost to rounding in the product.
        for i in 0..cov.nrows() {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok((mean, cov))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.targets.len() as f64;
        let log_det_half: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.targets.dot(&self.alpha_weights) - log_det_half - 0.5 * n * LN_2PI
    }

    /// `count` joint draws from the posterior over `grid`, one draw per row.
    pub fn sample_posterior(&self, grid: &[AugmentedParam], count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if grid.is_empty() {
            return Err(Error::invalid("sample grid must be non-empty"));
        }
        if count == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        let (mean, cov) = self.posterior(grid)?;
        let (l, _) = cholesky_with_jitter(&cov, self.noise.jitter)?;
        Ok(draw_gaussian(&mean, &l, count, seed))
    }
}

/// Rows are draws `mean + L z` with `z` standard normal.
pub(crate) fn draw_gaussian(mean: &DVector<f64>, l: &DMatrix<f64>, count: usize, seed: u64) -> DMatrix<f64> {
    let m = mean.len();
    let mut rng = rng::stream(seed);
    let z = DMatrix::from_fn(m, count, |_, _| StandardNormal.sample(&mut rng));
    let mut draws = (l * z).transpose();
    for mut row in draws.row_iter_mut() {
        row += mean.transpose();
    }
    draws
}

fn solve_chol(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(y).expect("factor has a positive diagonal");
    l.tr_solve_lower_triangular(&z).expect("factor has a positive diagonal")
}

fn clamp_variance(var: f64) -> f64 {
    if var < 0.0 && var >= -1e-10 {
        0.0
    } else {
        var.max(0.0)
    }
}

/// Log marginal likelihood for a candidate kernel without building a model.
pub(crate) fn lml_for(
    points: &[AugmentedParam],
    noise_diag: &[f64],
    targets: &DVector<f64>,
    kernel: &CompositeKernelConfig,
    jitter: f64,
) -> Result<f64> {
    let mut k = kernels::kernel_matrix_unchecked(points, kernel);
    for (i, v) in noise_diag.iter().enumerate() {
        k[(i, i)] += v;
    }
    let (l, _) = cholesky_with_jitter(&k, jitter)?;
    let alpha = solve_chol(&l, targets);
    let n = targets.len() as f64;
    let log_det_half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * targets.dot(&alpha) - log_det_half - 0.5 * n * LN_2PI)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ParamVector, RqConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn aug(v: &[f64], d: Fidelity) -> AugmentedParam {
        AugmentedParam::new(ParamVector::new(v.to_vec()).unwrap(), d)
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Observation>, CompositeKernelConfig, NoiseConfig) {
        let kernel = CompositeKernelConfig {
            sim_kernel: RqConfig {
                signal_variance: rng.random_range(0.3..3.0),
                length_scales: vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)],
                shape_alpha: rng.random_range(0.3..5.0),
            },
            err_kernel: RqConfig {
                signal_variance: rng.random_range(0.05..1.0),
                length_scales: vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)],
                shape_alpha: rng.random_range(0.3..5.0),
            },
            real_real_gain: 1.0,
        };
        let noise = NoiseConfig {
            sim_noise_variance: rng.random_range(0.001..0.1),
            real_noise_variance: rng.random_range(0.001..0.1),
            jitter: 1e-9,
        };
        let obs = (0..n)
            .map(|_| {
                let d = if rng.random_bool(0.4) { Fidelity::Real } else { Fidelity::Simulation };
                Observation::new(
                    aug(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], d),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(1..5),
                )
            })
            .collect();
        (obs, kernel, noise)
    }

    #[test]
    fn single_observation_shrinks_toward_prior() {
        let kernel = CompositeKernelConfig::default_for_dim(1);
        let noise = NoiseConfig { sim_noise_variance: 0.25, real_noise_variance: 0.0, jitter: 1e-9 };
        let a = aug(&[0.4], Fidelity::Simulation);
        let gp = GpModel::fit(&[Observation::new(a.clone(), 0.3, 1)], &kernel, &noise).unwrap();
        let (mean, _) = gp.predict(&a).unwrap();
        let expected = 0.3 * 1.0 / (1.0 + 0.25 + 1e-9);
        assert!((mean - expected).abs() < 1e-10);
        let oracle = oracle::build(gp.observations(), &kernel, &noise, 1e-9);
        assert!((mean - oracle.predict(&a).0).abs() < 1e-10);
    }

    #[test]
    fn averaged_observation_matches_duplicates() {
        let kernel = CompositeKernelConfig::default_for_dim(2);
        let noise = NoiseConfig { sim_noise_variance: 0.2, real_noise_variance: 0.1, jitter: 1e-9 };
        let a = aug(&[0.3, 0.6], Fidelity::Simulation);
        let twice = GpModel::fit(
            &[Observation::new(a.clone(), 0.8, 1), Observation::new(a.clone(), 0.8, 1)],
            &kernel,
            &noise,
        )
        .unwrap();
        let once = GpModel::fit(&[Observation::new(a, 0.8, 2)], &kernel, &noise).unwrap();
        for q in [[0.3, 0.6], [0.0, 0.0], [0.9, 0.2]] {
            for d in Fidelity::ALL {
                let q = aug(&q, d);
                assert!((twice.predict(&q).unwrap().0 - once.predict(&q).unwrap().0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn noiseless_interpolation() {
        let kernel = CompositeKernelConfig::default_for_dim(2);
        let a = aug(&[0.2, 0.7], Fidelity::Real);
        let gp = GpModel::fit(&[Observation::new(a.clone(), -0.4, 1)], &kernel, &NoiseConfig::noiseless()).unwrap();
        let (m, v) = gp.predict(&a).unwrap();
        assert!((m + 0.4).abs() < 1e-8);
        assert!(v < 1e-8);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let kernel = CompositeKernelConfig::default_for_dim(1);
        let noise = NoiseConfig::default();
        assert!(GpModel::fit(&[], &kernel, &noise).is_err());
        let bad = Observation::new(aug(&[0.1], Fidelity::Real), f64::NAN, 1);
        assert!(matches!(GpModel::fit(&[bad], &kernel, &noise), Err(Error::InvalidArgument(_))));
        let wrong_dim = Observation::new(aug(&[0.1, 0.2], Fidelity::Real), 0.0, 1);
        assert!(GpModel::fit(&[wrong_dim], &kernel, &noise).is_err());
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let kernel = CompositeKernelConfig {
            sim_kernel: RqConfig::isotropic(1, 1.0, 0.05, 50.0),
            err_kernel: RqConfig::isotropic(1, 0.3, 0.05, 50.0),
            real_real_gain: 1.0,
        };
        let gp = GpModel::fit(
            &[Observation::new(aug(&[0.0], Fidelity::Real), 1.5, 1)],
            &kernel,
            &NoiseConfig::default(),
        )
        .unwrap();
        let q = aug(&[1.0], Fidelity::Real);
        let (m, v) = gp.predict(&q).unwrap();
        assert!(m.abs() < 1e-6);
        assert!((v - 1.3).abs() < 1e-6);
        assert!(gp.predict(&aug(&[1.0, 0.0], Fidelity::Real)).is_err());
    }

    #[test]
    fn factor_reproduces_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (obs, kernel, noise) = random_instance(&mut rng, 10);
        let gp = GpModel::fit(&obs, &kernel, &noise).unwrap();
        let pts: Vec<_> = obs.iter().map(|o| o.a.clone()).collect();
        let mut k = kernels::kernel_matrix(&pts, &kernel).unwrap();
        for (i, o) in obs.iter().enumerate() {
            k[(i, i)] += noise.variance(o.a.fidelity(), o.repeats) + gp.jitter_used();
        }
        let rebuilt = gp.chol() * gp.chol().transpose();
        assert!((rebuilt - k).abs().max() < 1e-8);
    }

    #[test]
    fn predictions_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (obs, kernel, noise) = random_instance(&mut rng, 5);
        let gp = GpModel::fit(&obs, &kernel, &noise).unwrap();
        let oracle = oracle::build(&obs, &kernel, &noise, gp.jitter_used());
        for _ in 0..10 {
            let d = if rng.random_bool(0.5) { Fidelity::Real } else { Fidelity::Simulation };
            let q = aug(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], d);
            let (m, v) = gp.predict(&q).unwrap();
            let (om, ov) = oracle.predict(&q);
            assert!((m - om).abs() < 1e-8);
            assert!((v - ov).abs() < 1e-8);
        }
    }

    #[test]
    fn lml_of_scalar_gaussian() {
        let kernel = CompositeKernelConfig::default_for_dim(1);
        let a = aug(&[0.5], Fidelity::Simulation);
        let gp = GpModel::fit(&[Observation::new(a, 0.0, 1)], &kernel, &NoiseConfig::noiseless()).unwrap();
        let v = 1.0 + 1e-9;
        let expected = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        assert!((gp.log_marginal_likelihood() - expected).abs() < 1e-12);
    }

    #[test]
    fn lml_is_permutation_invariant_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (mut obs, kernel, noise) = random_instance(&mut rng, 6);
        let gp = GpModel::fit(&obs, &kernel, &noise).unwrap();
        let oracle = oracle::build(&obs, &kernel, &noise, gp.jitter_used());
        assert!((gp.log_marginal_likelihood() - oracle.lml()).abs() < 1e-8);
        obs.reverse();
        obs.swap(1, 4);
        let permuted = GpModel::fit(&obs, &kernel, &noise).unwrap();
        assert!((gp.log_marginal_likelihood() - permuted.log_marginal_likelihood()).abs() < 1e-10);
    }

    #[test]
    fn sample_mean_is_consistent_with_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (obs, kernel, noise) = random_instance(&mut rng, 6);
        let gp = GpModel::fit(&obs, &kernel, &noise).unwrap();
        let grid: Vec<_> = (0..5).map(|i| aug(&[0.2 * i as f64, 0.5], Fidelity::Real)).collect();
        let draws = gp.sample_posterior(&grid, 20_000, 99).unwrap();
        for (j, g) in grid.iter().enumerate() {
            let (m, v) = gp.predict(g).unwrap();
            let col = draws.column(j);
            let emp = col.mean();
            let se = (v / 20_000.0).sqrt();
            assert!((emp - m).abs() <= 3.0 * se + 1e-12, "point {j}: {emp} vs {m} (se {se})");
        }
    }

    #[test]
    fn sample_determinism_and_zero_variance_point() {
        let kernel = CompositeKernelConfig::default_for_dim(2);
        let a = aug(&[0.5, 0.5], Fidelity::Simulation);
        let gp = GpModel::fit(&[Observation::new(a.clone(), 0.7, 1)], &kernel, &NoiseConfig::noiseless()).unwrap();
        let grid = [aug(&[0.1, 0.9], Fidelity::Real), a.clone()];
        assert_eq!(gp.sample_posterior(&grid, 1, 4).unwrap(), gp.sample_posterior(&grid, 1, 4).unwrap());
        let draws = gp.sample_posterior(&[a], 500, 4).unwrap();
        // Fit and sampling jitter each leave ~1e-9 of variance at the observed point.
        let sd = (2.0 * NoiseConfig::noiseless().jitter).sqrt();
        assert!(draws.iter().all(|d| (d - 0.7).abs() < 6.0 * sd));
        assert!(gp.sample_posterior(&[], 1, 0).is_err());
        assert!(gp.sample_posterior(&grid, 0, 0).is_err());
    }

    #[test]
    fn posterior_matches_oracle_on_many_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.random_range(1..=12);
            let (obs, kernel, noise) = random_instance(&mut rng, n);
            let gp = GpModel::fit(&obs, &kernel, &noise).unwrap();
            let oracle = oracle::build(&obs, &kernel, &noise, gp.jitter_used());
            let qs: Vec<_> = (0..4)
                .map(|i| aug(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], Fidelity::ALL[i % 2]))
                .collect();
            let (mean, cov) = gp.posterior(&qs).unwrap();
            for (i, q) in qs.iter().enumerate() {
                let (om, ov) = oracle.predict(q);
                assert!((mean[i] - om).abs() < 1e-8);
                assert!((cov[(i, i)] - ov).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn extra_observation_never_increases_variance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..8);
            let (obs, kernel, noise) = random_instance(&mut rng, n + 1);
            let before = GpModel::fit(&obs[..n], &kernel, &noise).unwrap();
            let after = GpModel::fit(&obs, &kernel, &noise).unwrap();
            for d in Fidelity::ALL {
                let q = aug(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], d);
                prop_assert!(after.predict(&q).unwrap().1 <= before.predict(&q).unwrap().1 + 1e-9);
            }
        }

        #[test]
        fn real_observation_is_more_informative_for_real_queries(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (obs, kernel, noise) = random_instance(&mut rng, 4);
            let noise = NoiseConfig { real_noise_variance: noise.sim_noise_variance, ..noise };
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let q = aug(&[x[0] + 0.01, x[1]], Fidelity::Real);
            let with = |d: Fidelity| {
                let mut o = obs.clone();
                o.push(Observation::new(aug(&x, d), 0.5, 1));
                GpModel::fit(&o, &kernel, &noise).unwrap().predict(&q).unwrap().1
            };
            prop_assert!(with(Fidelity::Real) < with(Fidelity::Simulation));
        }

        #[test]
        fn fitting_is_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (obs, kernel, noise) = random_instance(&mut rng, 6);
            let a = GpModel::fit(&obs, &kernel, &noise).unwrap();
            let b = GpModel::fit(&obs, &kernel, &noise).unwrap();
            prop_assert_eq!(a.log_marginal_likelihood().to_bits(), b.log_marginal_likelihood().to_bits());
            prop_assert_eq!(a.alpha_weights(), b.alpha_weights());
        }
    }
}
