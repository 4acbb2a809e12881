//! Archive of true limit-state evaluations backing the local surrogates.

use crate::error::{Error, Result};
use crate::sample::sq_dist;

/// Per-coordinate absolute tolerance under which two points are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Growing set of `(theta, g(theta))` pairs, all from true evaluations.
///
/// Queries scan linearly; the sets stay at a few thousand points.
#[derive(Debug, Clone, Default)]
pub struct DesignSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl DesignSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, points: Vec::new(), values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of a stored point equal to `x` within [`DUPLICATE_TOL`].
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.find(x).is_some()
    }

    /// Stores a true evaluation. Returns `false` (and stores nothing) for a duplicate.
    pub fn insert(&mut self, x: &[f64], value: f64) -> Result<bool> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        if self.contains(x) {
            return Ok(false);
        }
        self.points.push(x.to_vec());
        self.values.push(value);
        Ok(true)
    }

    /// Indices of the `k` nearest points, nearest first; ties keep insertion order.
    pub fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        nearest_by(self.len(), k, |i| sq_dist(&self.points[i], x))
    }
}

/// `k` smallest of `dist2(i)` over `0..n`, returned as `(index, distance)`
/// sorted by distance with index as tie-break.
pub fn nearest_by(n: usize, k: usize, dist2: impl Fn(usize) -> f64) -> Result<Vec<(usize, f64)>> {
    if n < k {
        return Err(Error::DesignTooSmall { have: n, need: k });
    }
    let mut all: Vec<(usize, f64)> = (0..n).map(|i| (i, dist2(i))).collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < n && k > 0 {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all.truncate(k);
    Ok(all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> DesignSet {
        let mut d = DesignSet::new(1);
        for &v in values {
            d.insert(&[v], v * v).unwrap();
        }
        d
    }

    #[test]
    fn rejects_duplicates() {
        let mut d = DesignSet::new(2);
        assert!(d.insert(&[0.0, 1.0], 3.0).unwrap());
        assert!(!d.insert(&[0.0, 1.0 + 1e-13], 3.0).unwrap());
        assert!(d.insert(&[0.0, 1.0 + 1e-9], 3.0).unwrap());
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn dimension_checked() {
        let mut d = DesignSet::new(2);
        assert!(matches!(d.insert(&[0.0], 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn nearest_sorted_with_stable_ties() {
        let d = line(&[0.0, 1.0, 2.0, 3.0]);
        let nn = d.nearest(&[0.6], 2).unwrap();
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 0]);
        assert!((nn[1].1 - 0.6).abs() < 1e-15);

        let d = line(&[2.0, 0.0]);
        let nn = d.nearest(&[1.0], 1).unwrap();
        assert_eq!(nn[0].0, 0);
    }

    #[test]
    fn too_small() {
        let d = line(&[0.0]);
        assert!(matches!(d.nearest(&[0.0], 2), Err(Error::DesignTooSmall { have: 1, need: 2 })));
    }
}
