//! Box bounds and deterministic space-filling designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_i, hi_i]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxBounds(Vec<(f64, f64)>);

impl BoxBounds {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::invalid("bounds need at least one dimension"));
        }
        for (i, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bounds[{i}] must satisfy lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(BoxBounds(intervals))
    }

    pub fn unit(dim: usize) -> Self {
        BoxBounds(vec![(0.0, 1.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.0).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Map a unit-box point into these bounds.
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.0).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.0).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect()
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points in the unit box, starting at sequence index `start` (index 0
/// is the origin and usually skipped).
pub fn halton(count: usize, dim: usize, start: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "Halton design supports up to {} dimensions", PRIMES.len());
    (0..count as u64)
        .map(|i| PRIMES[..dim].iter().map(|&b| radical_inverse(start + i, b)).collect())
        .collect()
}

/// Stratified design of exactly `size` unit-box points: a full lattice with
/// `floor(size^(1/dim))` nodes per axis (endpoints included), topped up with
/// Halton points when `size` is not a perfect power.
pub fn stratified_design(size: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut per_axis = (size as f64).powf(1.0 / dim as f64).floor() as usize;
    while (per_axis + 1).checked_pow(dim as u32).is_some_and(|n| n <= size) {
        per_axis += 1;
    }
    while per_axis > 1 && per_axis.pow(dim as u32) > size {
        per_axis -= 1;
    }
    let mut points = Vec::with_capacity(size);
    if per_axis >= 2 {
        let step = 1.0 / (per_axis - 1) as f64;
        let total = per_axis.pow(dim as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; dim];
            for slot in p.iter_mut() {
                *slot = (rem % per_axis) as f64 * step;
                rem /= per_axis;
            }
            points.push(p);
        }
    }
    let missing = size - points.len();
    points.extend(halton(missing, dim, 1));
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_points() {
        let h = halton(3, 2, 1);
        assert_eq!(h[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(h[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(h[2], vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn stratified_one_dimension_includes_endpoints() {
        assert_eq!(stratified_design(3, 1), vec![vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn stratified_sizes_are_exact() {
        for (size, dim) in [(200, 2), (196, 2), (2, 2), (27, 3), (10, 3), (5, 1)] {
            let d = stratified_design(size, dim);
            assert_eq!(d.len(), size);
            assert!(d.iter().all(|p| p.len() == dim && p.iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }

    #[test]
    fn bounds_round_trip() {
        let b = BoxBounds::new(vec![(1.0, 3.0), (-1.0, 1.0)]).unwrap();
        let u = b.normalize(&[2.0, 0.5]);
        assert_eq!(u, vec![0.5, 0.75]);
        assert_eq!(b.denormalize(&u), vec![2.0, 0.5]);
        assert!(BoxBounds::new(vec![(1.0, 1.0)]).is_err());
        assert!(BoxBounds::new(vec![]).is_err());
    }
}
