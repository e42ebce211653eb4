use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::GaitParams;
use crate::error::{Error, Result};

/// Gravity used by the pendulum push model, m/s².
const G: f64 = 9.81;
const PUSH_STRING_LENGTH: f64 = 1.5;
const PUSH_MASS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// Gravity coefficient `a`, 1/s².
    pub gravity_coeff: f64,
    /// Control effectiveness `b`.
    pub control_coeff: f64,
    /// Viscous damping `c`, 1/s.
    pub damping: f64,
    /// Gait-phase excitation amplitude, rad/s².
    pub excitation_amp: f64,
    /// Step frequency, Hz.
    pub step_frequency: f64,
    pub dt: f64,
    /// Fall when either fused angle exceeds this, rad.
    pub fall_threshold: f64,
    pub real_gap_scale: f64,
    pub real_delay_steps: usize,
    /// Fused-angle measurement noise on the real system, rad.
    pub real_noise_std: f64,
    /// Gyro noise relative to `real_noise_std`, 1/s.
    pub gyro_noise_ratio: f64,
    /// Process noise on both planes, rad/s² per step.
    pub process_noise_std: f64,
    /// Constant lean drive of a walking command, as a multiple of `excitation_amp`.
    pub lean_ratio: f64,
    /// Expected-waveform amplitude per unit excitation, rad per rad/s².
    pub reference_gain: f64,
    pub u_max: f64,
    /// Fixed lateral stabiliser gains.
    pub lateral_p: f64,
    pub lateral_d: f64,
    /// Momentum-to-rate coefficient of a pendulum push, rad/s per kg·m/s.
    pub push_coeff: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            gravity_coeff: 9.0,
            control_coeff: 6.0,
            damping: 0.8,
            excitation_amp: 0.35,
            step_frequency: 1.4,
            dt: 0.01,
            fall_threshold: 0.7,
            real_gap_scale: 0.15,
            real_delay_steps: 2,
            real_noise_std: 0.02,
            gyro_noise_ratio: 10.0,
            process_noise_std: 3.0,
            lean_ratio: 1.0,
            reference_gain: 0.15,
            u_max: 1.5,
            lateral_p: 3.0,
            lateral_d: 0.5,
            push_coeff: 0.05,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("gravity_coeff", self.gravity_coeff),
            ("control_coeff", self.control_coeff),
            ("damping", self.damping),
            ("excitation_amp", self.excitation_amp),
            ("real_gap_scale", self.real_gap_scale),
            ("real_noise_std", self.real_noise_std),
            ("gyro_noise_ratio", self.gyro_noise_ratio),
            ("process_noise_std", self.process_noise_std),
            ("lean_ratio", self.lean_ratio),
            ("reference_gain", self.reference_gain),
            ("lateral_p", self.lateral_p),
            ("lateral_d", self.lateral_d),
            ("push_coeff", self.push_coeff),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        for (name, v) in [
            ("dt", self.dt),
            ("fall_threshold", self.fall_threshold),
            ("step_frequency", self.step_frequency),
            ("u_max", self.u_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0")));
            }
        }
        if self.real_gap_scale >= 1.0 {
            return Err(Error::invalid("real_gap_scale must be < 1"));
        }
        Ok(())
    }

    /// Coefficients of the physical system: heavier gravity, weaker actuation
    /// and less damping than the model.
    pub(crate) fn real_variant(&self) -> PlantConfig {
        let g = self.real_gap_scale;
        PlantConfig {
            gravity_coeff: self.gravity_coeff * (1.0 + g),
            control_coeff: self.control_coeff * (1.0 - g),
            damping: self.damping * (1.0 - g),
            ..self.clone()
        }
    }

    pub fn waveforms(&self) -> WaveformTable {
        let amp = self.reference_gain * self.excitation_amp;
        WaveformTable { sagittal: amp, lateral: 0.5 * amp, sideways: amp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Forward,
    Backward,
    SidewaysLeft,
    SidewaysRight,
    Halt,
}

impl Command {
    /// Sign of the walking direction in the sagittal and lateral planes.
    fn axes(self) -> (f64, f64) {
        match self {
            Command::Forward => (1.0, 0.0),
            Command::Backward => (-1.0, 0.0),
            Command::SidewaysLeft => (0.0, 1.0),
            Command::SidewaysRight => (0.0, -1.0),
            Command::Halt => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandSequence {
    segments: Vec<(Command, f64)>,
}

impl Default for CommandSequence {
    fn default() -> Self {
        CommandSequence {
            segments: vec![
                (Command::Halt, 2.0),
                (Command::Forward, 5.0),
                (Command::Backward, 5.0),
                (Command::SidewaysLeft, 4.0),
                (Command::SidewaysRight, 4.0),
            ],
        }
    }
}

impl CommandSequence {
    pub fn new(segments: Vec<(Command, f64)>) -> Result<Self> {
        let seq = CommandSequence { segments };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("command sequence must have at least one segment"));
        }
        if self.segments.iter().any(|(_, d)| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("segment durations must be > 0"));
        }
        Ok(())
    }

    pub fn segments(&self) -> &[(Command, f64)] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    /// Command active at time `t`; the last segment holds past the end.
    pub fn command_at(&self, t: f64) -> Command {
        let mut end = 0.0;
        for &(c, d) in &self.segments {
            end += d;
            if t < end {
                return c;
            }
        }
        self.segments.last().map(|s| s.0).unwrap_or(Command::Halt)
    }
}

/// Fused angles, their rates, and the gait phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitState {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_rate: f64,
    pub beta_rate: f64,
    pub phase: f64,
}

/// Wrap an angle into `(-pi, pi]`. Values within 1e-12 of a half-turn map to `+pi`.
fn wrap_angle(theta: f64) -> f64 {
    let turns = theta / TAU;
    let mut r = turns - turns.floor();
    if r > 0.5 + 1e-12 {
        r -= 1.0;
    }
    r * TAU
}

pub fn gait_phase(t: f64, frequency: f64) -> Result<f64> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::invalid(format!("step frequency must be > 0, got {frequency}")));
    }
    Ok(wrap_angle(TAU * frequency * t))
}

/// Amplitudes of the expected fused-angle waveform, derived from the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformTable {
    pub sagittal: f64,
    pub lateral: f64,
    pub sideways: f64,
}

/// Expected `(alpha, beta)` at a gait phase for a command.
pub fn expected_waveform(phase: f64, command: Command, table: &WaveformTable) -> (f64, f64) {
    let (sag, lat) = command.axes();
    let alpha = sag * table.sagittal * phase.sin();
    let beta_amp = if lat == 0.0 { table.lateral } else { lat * table.sideways };
    (alpha, beta_amp * (2.0 * phase).sin())
}

/// Time derivative of [`expected_waveform`].
pub(crate) fn expected_waveform_rate(phase: f64, command: Command, table: &WaveformTable, omega: f64) -> (f64, f64) {
    let (sag, lat) = command.axes();
    let alpha = sag * table.sagittal * omega * phase.cos();
    let beta_amp = if lat == 0.0 { table.lateral } else { lat * table.sideways };
    (alpha, 2.0 * omega * beta_amp * (2.0 * phase).cos())
}

/// PD corrective action on the fused-angle deviation, saturated at `u_max`.
pub fn corrective_action(e_p: f64, e_rate: f64, gains: &GaitParams, u_max: f64) -> f64 {
    (gains.p_gain * e_p + gains.d_gain * e_rate).clamp(-u_max, u_max)
}

/// One semi-implicit Euler step. `u` drives the sagittal plane only; the
/// lateral plane runs the fixed stabiliser. `command` sets the lean drive,
/// `disturbance_accel` acts on the sagittal plane, and `noise` is the
/// per-plane process-noise acceleration.
pub fn plant_step(
    state: &GaitState,
    u: f64,
    command: Command,
    cfg: &PlantConfig,
    disturbance_accel: f64,
    noise: [f64; 2],
) -> GaitState {
    let (sag, lat) = command.axes();
    let lean = cfg.lean_ratio * cfg.excitation_amp;
    let u_lat = (cfg.lateral_p * state.beta + cfg.lateral_d * state.beta_rate).clamp(-cfg.u_max, cfg.u_max);

    let alpha_acc = cfg.gravity_coeff * state.alpha.sin() - cfg.damping * state.alpha_rate - cfg.control_coeff * u
        + cfg.excitation_amp * state.phase.sin()
        + sag * lean
        + disturbance_accel
        + noise[0];
    let beta_acc = cfg.gravity_coeff * state.beta.sin() - cfg.damping * state.beta_rate - cfg.control_coeff * u_lat
        + cfg.excitation_amp * (state.phase + PI / 2.0).sin()
        + lat * lean
        + noise[1];

    let alpha_rate = state.alpha_rate + alpha_acc * cfg.dt;
    let beta_rate = state.beta_rate + beta_acc * cfg.dt;
    GaitState {
        alpha: state.alpha + alpha_rate * cfg.dt,
        beta: state.beta + beta_rate * cfg.dt,
        alpha_rate,
        beta_rate,
        phase: wrap_angle(state.phase + TAU * cfg.step_frequency * cfg.dt),
    }
}

/// Rate jump from a pendulum of mass 3 kg on a 1.5 m string released from a
/// horizontal offset `d`, scaled by `push_coeff`.
pub fn push_impulse(d: f64, push_coeff: f64) -> Result<f64> {
    if !(d.is_finite() && (0.0..PUSH_STRING_LENGTH).contains(&d)) {
        return Err(Error::invalid(format!("push distance must be in [0, 1.5), got {d}")));
    }
    let l = PUSH_STRING_LENGTH;
    let h = l - (l * l - d * d).sqrt();
    let v = (2.0 * G * h).sqrt();
    Ok(push_coeff * PUSH_MASS * v)
}
