use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::BoxBounds;

/// Exhaustive search over a lattice with `resolution` points per axis,
/// endpoints included. Ties keep the first point in row-major order.
pub fn grid_oracle<F>(mut f: F, bounds: &BoxBounds, resolution: usize) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    if resolution < 2 {
        return Err(Error::invalid("resolution must be >= 2 per dimension"));
    }
    let points = lattice(bounds, resolution);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x in points {
        let v = f(&x);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    best.ok_or_else(|| Error::invalid("empty lattice"))
}

/// Lattice points in row-major order (last axis fastest).
pub fn lattice(bounds: &BoxBounds, resolution: usize) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let total = resolution.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut u = vec![0.0; dim];
            for j in (0..dim).rev() {
                u[j] = (idx % resolution) as f64 / (resolution - 1) as f64;
                idx /= resolution;
            }
            bounds.denormalize(&u)
        })
        .collect()
}

/// Best of `n_evals` uniform draws. The draws for a given seed form a fixed
/// sequence, so a larger budget extends a smaller one.
pub fn random_search<F>(mut f: F, bounds: &BoxBounds, n_evals: usize, seed: u64) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    if n_evals == 0 {
        return Err(Error::invalid("n_evals must be >= 1"));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "random-search", 0));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..n_evals {
        let u: Vec<f64> = (0..bounds.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
        let x = bounds.denormalize(&u);
        let v = f(&x);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    best.ok_or_else(|| Error::invalid("no evaluations"))
}
