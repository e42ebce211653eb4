//! Downhill simplex with the canonical coefficients.

use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best simplex value after each iteration.
    pub best_trace: Vec<f64>,
}

/// Minimise `f` from `x0` using an axis-aligned initial simplex of size
/// `init_scale`. Stops when the spread of simplex values drops below
/// `tolerance` or after `max_iters` iterations.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], init_scale: f64, tolerance: f64, max_iters: usize) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.is_empty() {
        return Err(Error::invalid("Nelder-Mead needs at least one dimension"));
    }
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let f0 = eval(x0);
    if !f0.is_finite() {
        return Err(Error::invalid(format!("objective is not finite at the start point ({f0})")));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += init_scale;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut best_trace = Vec::new();
    loop {
        // Stable sort keeps the start point first among ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread < tolerance || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].0.clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(REFLECT * EXPAND);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(REFLECT * CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = bi + SHRINK * (*xi - bi);
                    }
                    *v = eval(x);
                }
            }
        }
        best_trace.push(simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min));
    }

    let (x, f) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, f, iterations, evaluations, best_trace })
}
