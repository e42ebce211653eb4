//! Shared fixtures for the criterion benches.

use simreal_core::gp::Observation;
use simreal_core::sampling::halton;
use simreal_core::{AugmentedParam, Fidelity, ParamVector};

/// `n` observations on a smooth 2-D bowl; every fourth one is real.
pub fn bowl_observations(n: usize) -> Vec<Observation> {
    halton(n, 2, 1)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let fidelity = if i % 4 == 3 { Fidelity::Real } else { Fidelity::Simulation };
            let gap = if fidelity == Fidelity::Real { 0.3 * x[0] } else { 0.0 };
            let cost = (x[0] - 0.7).powi(2) + 0.5 * (x[1] - 0.4).powi(2) + gap;
            let repeats = if fidelity == Fidelity::Real { 1 } else { 4 };
            Observation::new(AugmentedParam::new(ParamVector::new(x).expect("finite"), fidelity), cost, repeats)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_mixes_fidelities() {
        let obs = bowl_observations(8);
        assert_eq!(obs.iter().filter(|o| o.a.fidelity() == Fidelity::Real).count(), 2);
        assert!(obs.iter().all(|o| o.cost.is_finite()));
    }
}
