//! The optimisation loop on a cheap analytic problem.

use simreal_core::acquisition::AcquisitionConfig;
use simreal_core::gp::{GpModel, Observation};
use simreal_core::optimizer::history::{read_history, validate_history, write_history, RunStatus, RunSummary};
use simreal_core::optimizer::{
    run_bo, BoConfig, Budget, EvalOutcome, Evaluation, Evaluator, RunHistory,
};
use simreal_core::{AugmentedParam, Error, Fidelity, ParamVector, Result};

/// Quadratic bowl; the real fidelity adds a tilt that moves the minimum.
struct Bowl {
    calls: usize,
    real_answer: fn(usize) -> Option<EvalOutcome>,
}

impl Bowl {
    fn new() -> Self {
        Bowl { calls: 0, real_answer: |_| None }
    }

    fn cost(x: &[f64], fidelity: Fidelity) -> f64 {
        let sim = (x[0] - 0.6).powi(2) + 0.5 * (x[1] - 0.3).powi(2);
        match fidelity {
            Fidelity::Simulation => sim,
            Fidelity::Real => sim + 0.2 * x[0],
        }
    }
}

impl Evaluator for Bowl {
    fn evaluate(&mut self, x: &[f64], fidelity: Fidelity, _index: usize) -> Result<EvalOutcome> {
        self.calls += 1;
        if fidelity == Fidelity::Real {
            if let Some(o) = (self.real_answer)(self.calls) {
                return Ok(o);
            }
        }
        let repeats = if fidelity == Fidelity::Real { 1 } else { 4 };
        Ok(EvalOutcome::Cost(Evaluation { cost: Self::cost(x, fidelity), repeats, falls: 0, elapsed_s: 1.0 }))
    }
}

fn small_config(max_real: usize, max_total: usize) -> BoConfig {
    BoConfig {
        initial_design: 6,
        budget: Budget::new(max_real, max_total),
        acquisition: AcquisitionConfig { grid_size: 40, mc_samples: 60, fantasy_draws: 4, ..AcquisitionConfig::default() },
        ..BoConfig::default()
    }
}

fn summary_of(h: &RunHistory, cfg: &BoConfig) -> RunSummary {
    RunSummary::new(h, RunStatus::Completed, "test".to_string(), cfg.acquisition.grid_size, &cfg.noise)
}

#[test]
fn initial_design_only_budget() {
    let cfg = BoConfig { initial_design: 8, ..small_config(0, 8) };
    let h = run_bo(&mut Bowl::new(), 2, &cfg, 1).unwrap();
    assert_eq!(h.records.len(), 8);
    assert!(h.records.iter().all(|r| r.fidelity == Fidelity::Simulation && r.entropy_before.is_none()));
    assert!(h.incumbent.is_some());
}

#[test]
fn budgets_hold_and_incumbent_matches_the_posterior() {
    let cfg = small_config(3, 16);
    let h = run_bo(&mut Bowl::new(), 2, &cfg, 5).unwrap();
    assert!(h.budget.used_real <= 3 && h.budget.used_total <= 16);
    for (i, r) in h.records.iter().enumerate() {
        assert_eq!(r.iter, i);
        assert_eq!(r.total_used, i + 1);
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    // Recompute the final posterior by hand in standardised units.
    let obs = h.observations().unwrap();
    let n = obs.len() as f64;
    let mean = obs.iter().map(|o| o.cost).sum::<f64>() / n;
    let sd = (obs.iter().map(|o| (o.cost - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scaled: Vec<Observation> = obs.iter().map(|o| Observation { cost: (o.cost - mean) / sd, ..o.clone() }).collect();
    let model = GpModel::fit(&scaled, h.kernel.as_ref().unwrap(), &cfg.noise).unwrap();
    let inc = h.incumbent.as_ref().unwrap();
    let a = AugmentedParam::new(ParamVector::new(inc.x.clone()).unwrap(), Fidelity::Real);
    let (m, _) = model.predict(&a).unwrap();
    assert!((mean + sd * m - inc.predicted_cost).abs() <= 1e-12);
}

#[test]
fn same_seed_same_history() {
    let cfg = small_config(2, 12);
    let a = run_bo(&mut Bowl::new(), 2, &cfg, 9).unwrap();
    let b = run_bo(&mut Bowl::new(), 2, &cfg, 9).unwrap();
    assert_eq!(a, b);
    let c = run_bo(&mut Bowl::new(), 2, &cfg, 10).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn simulation_only_budget_never_asks_for_real() {
    let h = run_bo(&mut Bowl::new(), 2, &small_config(0, 12), 3).unwrap();
    assert_eq!(h.budget.used_real, 0);
    assert!(h.records.iter().all(|r| r.fidelity == Fidelity::Simulation));
}

#[test]
fn skipped_real_trials_are_not_charged() {
    let mut ev = Bowl { calls: 0, real_answer: |_| Some(EvalOutcome::Skip) };
    let cfg = BoConfig { stall_window: 3, ..small_config(3, 12) };
    let h = run_bo(&mut ev, 2, &cfg, 4).unwrap();
    assert_eq!(h.budget.used_real, 0);
    assert!(h.records.iter().all(|r| r.fidelity == Fidelity::Simulation));
}

#[test]
fn abort_keeps_the_partial_history() {
    let mut ev = Bowl { calls: 0, real_answer: |_| Some(EvalOutcome::Abort) };
    let failure = run_bo(&mut ev, 2, &small_config(3, 30), 2).unwrap_err();
    assert!(matches!(failure.error, Error::Aborted));
    assert!(failure.history.records.len() >= 6);
    assert!(failure.history.incumbent.is_none());
}

#[test]
fn non_finite_cost_is_an_evaluation_error() {
    struct Broken;
    impl Evaluator for Broken {
        fn evaluate(&mut self, _: &[f64], _: Fidelity, index: usize) -> Result<EvalOutcome> {
            let cost = if index == 2 { f64::NAN } else { 1.0 };
            Ok(EvalOutcome::Cost(Evaluation { cost, repeats: 1, falls: 0, elapsed_s: 0.0 }))
        }
    }
    let failure = run_bo(&mut Broken, 2, &small_config(1, 10), 1).unwrap_err();
    assert!(matches!(failure.error, Error::Evaluation(_)));
    assert_eq!(failure.history.records.len(), 2);
}

#[test]
fn history_round_trips_and_validates() {
    let cfg = small_config(2, 12);
    let h = run_bo(&mut Bowl::new(), 2, &cfg, 6).unwrap();
    let summary = summary_of(&h, &cfg);
    let mut buf = Vec::new();
    write_history(&mut buf, &h.records, &summary).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), h.records.len() + 1);

    let (records, read) = read_history(buf.as_slice()).unwrap();
    let read = read.unwrap();
    assert_eq!(records, h.records);
    let report = validate_history(&records, &read).unwrap();
    assert!(report.incumbent_checked && report.incumbent_error <= 1e-9);
    assert_eq!(report.real_records, h.budget.used_real);
}

#[test]
fn validator_rejects_tampering() {
    let cfg = small_config(2, 12);
    let h = run_bo(&mut Bowl::new(), 2, &cfg, 6).unwrap();
    let summary = summary_of(&h, &cfg);

    let mut shifted = h.records.clone();
    shifted[3].cost += 0.5;
    assert!(validate_history(&shifted, &summary).is_err());

    let mut outside = h.records.clone();
    outside[0].x[1] = 1.5;
    assert!(validate_history(&outside, &summary).is_err());

    let mut recount = h.records.clone();
    recount[4].total_used += 1;
    assert!(validate_history(&recount, &summary).is_err());

    let mut tight = summary.clone();
    tight.max_total = h.records.len() - 1;
    assert!(validate_history(&h.records, &tight).is_err());
}
