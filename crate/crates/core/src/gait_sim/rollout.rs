use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plant::expected_waveform_rate;
use super::{
    corrective_action, expected_waveform, plant_step, push_impulse, CommandSequence, GainBounds, GaitParams,
    GaitState, PenaltyConfig, PlantConfig,
};
use crate::error::Result;
use crate::kernels::Fidelity;
use crate::rng;

/// A pendulum strike: released from offset `distance` (m) at `time` (s).
/// `direction` +1 pushes from behind (forward tilt), -1 from the front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Push {
    pub time: f64,
    pub distance: f64,
    #[serde(default = "forward")]
    pub direction: f64,
}

fn forward() -> f64 {
    1.0
}

/// Everything a rollout needs besides the gains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitProblem {
    pub plant: PlantConfig,
    pub sequence: CommandSequence,
    pub penalty: PenaltyConfig,
    pub bounds: GainBounds,
    pub pushes: Vec<Push>,
}

impl GaitProblem {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.sequence.validate()?;
        self.penalty.validate()?;
        self.bounds.validate()?;
        for p in &self.pushes {
            push_impulse(p.distance, self.plant.push_coeff)?;
        }
        Ok(())
    }

    pub fn with_pushes(&self, pushes: Vec<Push>) -> Self {
        GaitProblem { pushes, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub e_p_alpha: f64,
    pub e_p_beta: f64,
    pub u: f64,
    pub alpha: f64,
    pub beta: f64,
    pub fell: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j_alpha: f64,
    pub j_beta: f64,
    pub penalty: f64,
    pub fell: bool,
    pub fall_time: Option<f64>,
    pub trace: Vec<TracePoint>,
}

impl CostReport {
    /// Sagittal deviation integral without the gain penalty.
    pub fn deviation_alpha(&self) -> f64 {
        self.j_alpha - self.penalty
    }
}

pub fn penalty(gains: &GaitParams, cfg: &PenaltyConfig, bounds: &GainBounds) -> f64 {
    let norm = gains.to_unit(bounds).iter().map(|v| v * v).sum::<f64>().sqrt();
    cfg.magnitude_scale / (1.0 + (-cfg.steepness * (norm - cfg.center)).exp())
}

struct Sensors {
    angle_sd: f64,
    rate_sd: f64,
    delay: usize,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Integrate the plant over the command sequence and score the fused-angle
/// deviations. A fall stops the integration; every remaining step is charged
/// `fall_threshold` in both planes.
pub fn rollout(problem: &GaitProblem, gains: &GaitParams, fidelity: Fidelity, seed: u64) -> CostReport {
    let nominal = &problem.plant;
    let (plant, sensors) = match fidelity {
        Fidelity::Simulation => (nominal.clone(), Sensors { angle_sd: 0.0, rate_sd: 0.0, delay: 0 }),
        Fidelity::Real => (
            nominal.real_variant(),
            Sensors {
                angle_sd: nominal.real_noise_std,
                rate_sd: nominal.real_noise_std * nominal.gyro_noise_ratio,
                delay: nominal.real_delay_steps,
            },
        ),
    };
    let table = nominal.waveforms();
    let omega = TAU * nominal.step_frequency;
    let dt = nominal.dt;
    let steps = (problem.sequence.duration() / dt).round() as usize;
    let nu = penalty(gains, &problem.penalty, &problem.bounds);

    // Separate streams keep the process noise identical across fidelities.
    let mut process_rng = rng::stream(rng::derive_seed(seed, "process", 0));
    let mut sensor_rng = rng::stream(rng::derive_seed(seed, "sensor", 0));

    let mut pushes: Vec<(f64, f64)> = problem
        .pushes
        .iter()
        .map(|p| (p.time, p.direction * push_impulse(p.distance, nominal.push_coeff).unwrap_or(0.0)))
        .collect();
    pushes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut next_push = 0;

    let mut state = GaitState::default();
    let mut pending: VecDeque<(f64, f64)> = VecDeque::with_capacity(sensors.delay + 1);
    let mut trace = Vec::with_capacity(steps);
    let (mut dev_alpha, mut dev_beta) = (0.0, 0.0);
    let mut fall_time = None;

    for k in 0..steps {
        let t = k as f64 * dt;
        while next_push < pushes.len() && pushes[next_push].0 <= t + 1e-9 {
            state.alpha_rate += pushes[next_push].1;
            next_push += 1;
        }
        let command = problem.sequence.command_at(t);
        let (ref_a, ref_b) = expected_waveform(state.phase, command, &table);
        let (ref_rate_a, _) = expected_waveform_rate(state.phase, command, &table, omega);

        let (mut meas_a, mut meas_b, mut meas_rate_a) = (state.alpha, state.beta, state.alpha_rate);
        if sensors.angle_sd > 0.0 || sensors.rate_sd > 0.0 {
            meas_a += sensors.angle_sd * normal(&mut sensor_rng);
            meas_b += sensors.angle_sd * normal(&mut sensor_rng);
            meas_rate_a += sensors.rate_sd * normal(&mut sensor_rng);
        }
        let e_a = meas_a - ref_a;
        let e_b = meas_b - ref_b;
        pending.push_back((e_a, meas_rate_a - ref_rate_a));
        let (e_ctrl, e_rate_ctrl) = if pending.len() > sensors.delay {
            pending.pop_front().expect("non-empty")
        } else {
            (0.0, 0.0)
        };
        let u = corrective_action(e_ctrl, e_rate_ctrl, gains, plant.u_max);

        dev_alpha += e_a.abs() * dt;
        dev_beta += e_b.abs() * dt;
        trace.push(TracePoint { t, e_p_alpha: e_a, e_p_beta: e_b, u, alpha: state.alpha, beta: state.beta, fell: false });

        let noise = if plant.process_noise_std > 0.0 {
            [plant.process_noise_std * normal(&mut process_rng), plant.process_noise_std * normal(&mut process_rng)]
        } else {
            [0.0, 0.0]
        };
        state = plant_step(&state, u, command, &plant, 0.0, noise);

        let limit = nominal.fall_threshold;
        if state.alpha.abs() > limit || state.beta.abs() > limit || !state.alpha.is_finite() || !state.beta.is_finite() {
            fall_time = Some((k + 1) as f64 * dt);
            for r in k + 1..steps {
                dev_alpha += limit * dt;
                dev_beta += limit * dt;
                trace.push(TracePoint {
                    t: r as f64 * dt,
                    e_p_alpha: limit,
                    e_p_beta: limit,
                    u: 0.0,
                    alpha: state.alpha,
                    beta: state.beta,
                    fell: true,
                });
            }
            break;
        }
    }

    CostReport {
        j_alpha: dev_alpha + nu,
        j_beta: dev_beta + nu,
        penalty: nu,
        fell: fall_time.is_some(),
        fall_time,
        trace,
    }
}

/// Seeds of the `n` simulation rollouts averaged into one evaluation.
pub(crate) fn simulation_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, "sim-rollout", index as u64)
}

pub(crate) fn simulated_reports(problem: &GaitProblem, gains: &GaitParams, n: usize, seed: u64) -> Vec<CostReport> {
    (0..n)
        .into_par_iter()
        .map(|i| rollout(problem, gains, Fidelity::Simulation, simulation_seed(seed, i)))
        .collect()
}

/// Mean `(J_alpha, J_beta)` over `n` simulation rollouts.
pub fn simulated_cost(problem: &GaitProblem, gains: &GaitParams, n: usize, seed: u64) -> (f64, f64) {
    let reports = simulated_reports(problem, gains, n.max(1), seed);
    let k = reports.len() as f64;
    (
        reports.iter().map(|r| r.j_alpha).sum::<f64>() / k,
        reports.iter().map(|r| r.j_beta).sum::<f64>() / k,
    )
}

/// One rollout on the perturbed "real" plant.
pub fn surrogate_real_cost(problem: &GaitProblem, gains: &GaitParams, seed: u64) -> (f64, f64) {
    let r = rollout(problem, gains, Fidelity::Real, seed);
    (r.j_alpha, r.j_beta)
}

pub const TRACE_CSV_HEADER: &str = "t,e_p_alpha,e_p_beta,u,alpha,beta,fell";

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TracePoint]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for p in trace {
        writeln!(out, "{},{},{},{},{},{},{}", p.t, p.e_p_alpha, p.e_p_beta, p.u, p.alpha, p.beta, u8::from(p.fell))?;
    }
    Ok(())
}
