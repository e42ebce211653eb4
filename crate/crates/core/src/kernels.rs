//! Covariance functions over augmented parameter vectors.
//!
//! All kernels operate on gains normalised to the unit box; mapping from the
//! physical gain bounds is the caller's responsibility.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the normalised controller-gain space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector must have at least one component"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector components must be finite"));
        }
        Ok(ParamVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// True when every component lies in `[0, 1]`.
    pub fn in_unit_box(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Simulation,
    /// The costly fidelity: the physical system or its surrogate.
    Real,
}

impl Fidelity {
    pub const ALL: [Fidelity; 2] = [Fidelity::Simulation, Fidelity::Real];

    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::Simulation => "simulation",
            Fidelity::Real => "real",
        }
    }
}

/// A parameter vector tagged with the fidelity it was (or will be) evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedParam {
    x: ParamVector,
    delta: Fidelity,
}

impl AugmentedParam {
    pub fn new(x: ParamVector, delta: Fidelity) -> Self {
        AugmentedParam { x, delta }
    }

    pub fn x(&self) -> &ParamVector {
        &self.x
    }

    pub fn fidelity(&self) -> Fidelity {
        self.delta
    }

    pub fn with_fidelity(&self, delta: Fidelity) -> Self {
        AugmentedParam { x: self.x.clone(), delta }
    }
}

/// Rational-quadratic kernel with one length scale per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RqConfig {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub shape_alpha: f64,
}

impl RqConfig {
    pub fn isotropic(dim: usize, signal_variance: f64, length_scale: f64, shape_alpha: f64) -> Self {
        RqConfig { signal_variance, length_scales: vec![length_scale; dim], shape_alpha }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.signal_variance) {
            return Err(Error::invalid("signal_variance must be > 0"));
        }
        if !positive(self.shape_alpha) {
            return Err(Error::invalid("shape_alpha must be > 0"));
        }
        if self.length_scales.is_empty() || !self.length_scales.iter().all(|&l| positive(l)) {
            return Err(Error::invalid("length_scales must be non-empty and all > 0"));
        }
        Ok(())
    }

    /// Kernel value without dimension checks; callers guarantee matching lengths.
    #[inline]
    pub(crate) fn eval(&self, xi: &[f64], xj: &[f64]) -> f64 {
        let r2: f64 = xi
            .iter()
            .zip(xj)
            .zip(&self.length_scales)
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum();
        self.signal_variance * (1.0 + r2 / (2.0 * self.shape_alpha)).powf(-self.shape_alpha)
    }
}

/// Configuration of `k(a_i, a_j) = k_sim(x_i, x_j) + k_delta(d_i, d_j) * k_err(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeKernelConfig {
    pub sim_kernel: RqConfig,
    pub err_kernel: RqConfig,
    #[serde(default = "default_real_real_gain")]
    pub real_real_gain: f64,
}

fn default_real_real_gain() -> f64 {
    1.0
}

impl CompositeKernelConfig {
    /// Defaults used when no kernel is configured: a unit-variance simulation
    /// kernel and a weaker, smoother error kernel.
    pub fn default_for_dim(dim: usize) -> Self {
        CompositeKernelConfig {
            sim_kernel: RqConfig::isotropic(dim, 1.0, 0.3, 2.0),
            err_kernel: RqConfig::isotropic(dim, 0.2, 0.5, 2.0),
            real_real_gain: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sim_kernel.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_kernel.validate()?;
        self.err_kernel.validate()?;
        if self.sim_kernel.dim() != self.err_kernel.dim() {
            return Err(Error::invalid("sim and err kernels must share a dimension"));
        }
        if !(self.real_real_gain.is_finite() && self.real_real_gain >= 0.0) {
            return Err(Error::invalid("real_real_gain must be >= 0"));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval(&self, ai: &AugmentedParam, aj: &AugmentedParam) -> f64 {
        let xi = ai.x.values();
        let xj = aj.x.values();
        let sim = self.sim_kernel.eval(xi, xj);
        let gate = delta_kernel(ai.delta, aj.delta, self);
        if gate == 0.0 {
            sim
        } else {
            sim + gate * self.err_kernel.eval(xi, xj)
        }
    }
}

fn check_dims(xi: &[f64], xj: &[f64], dim: usize) -> Result<()> {
    if xi.len() != dim || xj.len() != dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: points have {} and {} components, kernel expects {dim}",
            xi.len(),
            xj.len()
        )));
    }
    Ok(())
}

pub fn rq_kernel(xi: &ParamVector, xj: &ParamVector, cfg: &RqConfig) -> Result<f64> {
    check_dims(xi.values(), xj.values(), cfg.dim())?;
    Ok(cfg.eval(xi.values(), xj.values()))
}

/// Fidelity gate: `real_real_gain` for a pair of real evaluations, zero otherwise.
pub fn delta_kernel(di: Fidelity, dj: Fidelity, cfg: &CompositeKernelConfig) -> f64 {
    match (di, dj) {
        (Fidelity::Real, Fidelity::Real) => cfg.real_real_gain,
        _ => 0.0,
    }
}

pub fn composite_kernel(
    ai: &AugmentedParam,
    aj: &AugmentedParam,
    cfg: &CompositeKernelConfig,
) -> Result<f64> {
    check_dims(ai.x.values(), aj.x.values(), cfg.dim())?;
    if cfg.err_kernel.dim() != cfg.dim() {
        return Err(Error::invalid("sim and err kernels must share a dimension"));
    }
    Ok(cfg.eval(ai, aj))
}

pub fn kernel_matrix(points: &[AugmentedParam], cfg: &CompositeKernelConfig) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("kernel matrix needs at least one point"));
    }
    check_points(points, cfg)?;
    Ok(kernel_matrix_unchecked(points, cfg))
}

pub(crate) fn check_points(points: &[AugmentedParam], cfg: &CompositeKernelConfig) -> Result<()> {
    let dim = cfg.dim();
    if cfg.err_kernel.dim() != dim {
        return Err(Error::invalid("sim and err kernels must share a dimension"));
    }
    match points.iter().find(|p| p.x.dim() != dim) {
        Some(p) => Err(Error::invalid(format!(
            "dimension mismatch: point has {} components, kernel expects {dim}",
            p.x.dim()
        ))),
        None => Ok(()),
    }
}

pub(crate) fn kernel_matrix_unchecked(points: &[AugmentedParam], cfg: &CompositeKernelConfig) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = cfg.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance `K[i][j] = k(rows[i], cols[j])`.
pub(crate) fn cross_matrix(
    rows: &[AugmentedParam],
    cols: &[AugmentedParam],
    cfg: &CompositeKernelConfig,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| cfg.eval(&rows[i], &cols[j]))
}
