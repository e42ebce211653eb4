//! Answering every prompt with the surrogate's own cost reproduces `optimize`.

use simreal_cli::operator::{CostSource, OperatorEvaluator, OperatorPrompt};
use simreal_cli::parse_config_str;
use simreal_core::optimizer::{run_bo, GaitEvaluator};
use simreal_core::Fidelity;

struct Surrogate<'a>(GaitEvaluator<'a>);

impl CostSource for Surrogate<'_> {
    fn answer(&mut self, prompt: &OperatorPrompt, _attempt: usize) -> Option<String> {
        let reports = self.0.reports(&prompt.x, Fidelity::Real, prompt.index);
        Some(format!("{}\n", self.0.summarize(&reports).cost))
    }
}

#[test]
fn surrogate_answers_match_the_automatic_run() {
    let cfg = parse_config_str(
        r#"{"sequence": [["halt", 1.0], ["forward", 3.0]],
            "acquisition": {"grid_size": 30, "mc_samples": 40, "fantasy_draws": 3, "cost_real": 1.0},
            "budgets": {"max_real": 3, "max_total": 14},
            "optimizer": {"initial_design": 6}}"#,
    )
    .unwrap();
    let problem = cfg.problem();
    let objective = cfg.optimizer.objective;
    let repeats = cfg.acquisition.sim_repeats;

    let mut auto = GaitEvaluator::new(&problem, objective, repeats, cfg.seed);
    let expected = run_bo(&mut auto, 2, &cfg.bo(), cfg.seed).unwrap();
    assert!(expected.budget.used_real > 0);

    let mut manual = OperatorEvaluator {
        sim: GaitEvaluator::new(&problem, objective, repeats, cfg.seed),
        source: Surrogate(GaitEvaluator::new(&problem, objective, repeats, cfg.seed)),
    };
    let got = run_bo(&mut manual, 2, &cfg.bo(), cfg.seed).unwrap();

    assert_eq!(got.records.len(), expected.records.len());
    for (g, e) in got.records.iter().zip(&expected.records) {
        assert_eq!((g.fidelity, &g.x, g.cost), (e.fidelity, &e.x, e.cost));
    }
    let (g, e) = (got.incumbent.unwrap(), expected.incumbent.unwrap());
    assert_eq!(g.x, e.x);
    assert!((g.predicted_cost - e.predicted_cost).abs() <= 1e-9);
}
