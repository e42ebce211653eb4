//! Sim-to-real Bayesian optimisation of feedback-controller gains.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] – rational-quadratic covariances and the fidelity-gated
//!   composite kernel over augmented `(x, fidelity)` points.
//! * [`gp`] – Gaussian-process regression on augmented points: fitting,
//!   prediction, marginal likelihood, hyperparameter search and joint
//!   posterior sampling.
//! * [`acquisition`] – Monte-Carlo estimate of the distribution over the
//!   minimiser's location and the entropy-per-cost selection of the next
//!   evaluation.
//! * [`gait_sim`] – a toy two-plane balance plant driven by a gait phase,
//!   with a perturbed "real" variant and the deviation-integral costs.
//! * [`optimizer`] – the budgeted optimisation loop, Nelder-Mead, the
//!   random-search and lattice baselines, and the before/after protocol.

pub mod acquisition;
pub mod error;
pub mod gait_sim;
pub mod gp;
pub mod kernels;
pub mod optimizer;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use kernels::{AugmentedParam, CompositeKernelConfig, Fidelity, ParamVector, RqConfig};
