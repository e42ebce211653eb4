//! Toy two-plane balance plant driven by an open-loop gait phase.
//!
//! Each plane (sagittal `alpha`, lateral `beta`) is a driven, damped
//! inverted-pendulum-like second-order system. The sagittal plane receives the
//! tuned corrective action; the lateral plane runs a fixed stabiliser. The
//! "real" fidelity perturbs the plant coefficients, delays the control and
//! corrupts the measurements, giving a smooth sim-to-real gap over the gains.

mod plant;
mod rollout;

pub use plant::{
    corrective_action, expected_waveform, gait_phase, plant_step, push_impulse, Command, CommandSequence, GaitState,
    PlantConfig, WaveformTable,
};
pub(crate) use rollout::simulated_reports;
pub use rollout::{
    penalty, rollout, simulated_cost, surrogate_real_cost, write_trace_csv, CostReport, GaitProblem, Push, TracePoint,
    TRACE_CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::BoxBounds;

/// Sagittal arm-angle corrective gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub p_gain: f64,
    pub d_gain: f64,
}

impl GaitParams {
    pub fn new(p_gain: f64, d_gain: f64) -> Self {
        GaitParams { p_gain, d_gain }
    }

    pub fn from_unit(u: &[f64], bounds: &GainBounds) -> Self {
        let x = bounds.as_box().denormalize(u);
        GaitParams { p_gain: x[0], d_gain: x[1] }
    }

    pub fn to_unit(&self, bounds: &GainBounds) -> Vec<f64> {
        bounds.as_box().normalize(&[self.p_gain, self.d_gain])
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.p_gain, self.d_gain]
    }
}

/// Physical search box for the gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainBounds {
    pub p_gain: (f64, f64),
    pub d_gain: (f64, f64),
}

impl Default for GainBounds {
    fn default() -> Self {
        GainBounds { p_gain: (1.0, 5.0), d_gain: (0.0, 1.5) }
    }
}

impl GainBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("p_gain", self.p_gain), ("d_gain", self.d_gain)] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return Err(Error::invalid(format!("{name} bounds must satisfy 0 <= lo < hi")));
            }
        }
        Ok(())
    }

    pub fn as_box(&self) -> BoxBounds {
        BoxBounds::new(vec![self.p_gain, self.d_gain]).expect("validated gain bounds")
    }

    /// Centre of the box: the untuned factory gains.
    pub fn midpoint(&self) -> GaitParams {
        GaitParams::from_unit(&[0.5, 0.5], self)
    }

    pub fn contains(&self, g: &GaitParams) -> bool {
        self.as_box().contains(&g.as_vec())
    }
}

/// Logistic gain-magnitude penalty `c / (1 + exp(-s (|x| - r)))` on the
/// normalised gain vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub magnitude_scale: f64,
    pub steepness: f64,
    pub center: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { magnitude_scale: 0.5, steepness: 4.0, center: 1.5 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_scale.is_finite() && self.magnitude_scale >= 0.0) {
            return Err(Error::invalid("magnitude_scale must be >= 0"));
        }
        if !(self.steepness.is_finite() && self.steepness > 0.0) {
            return Err(Error::invalid("steepness must be > 0"));
        }
        if !(self.center.is_finite() && self.center > 0.0) {
            return Err(Error::invalid("center must be > 0"));
        }
        Ok(())
    }
}
