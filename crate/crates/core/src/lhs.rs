//! Latin hypercube designs mapped to standard-normal space.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Open01;

use crate::error::{Error, Result};
use crate::normal;
use crate::rng::RngStream;

/// Stratified points in the unit cube: in every column each interval
/// `[k/n, (k+1)/n)` holds exactly one point, placed uniformly inside it.
pub fn unit_lhs(n: usize, d: usize, stream: RngStream) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("latin hypercube needs at least 2 points, got {n}")));
    }
    let mut rng = stream.rng();
    let mut u = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (i, &k) in strata.iter().enumerate() {
            let jitter: f64 = rng.sample(Open01);
            u[(i, j)] = (k as f64 + jitter) / n as f64;
        }
    }
    Ok(u)
}

/// Latin hypercube sample pushed through the inverse normal CDF.
pub fn lhs_sample(n: usize, d: usize, stream: RngStream) -> Result<DMatrix<f64>> {
    let mut u = unit_lhs(n, d, stream)?;
    for v in u.iter_mut() {
        *v = normal::inv_cdf(*v)?;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_stratum() {
        let u = unit_lhs(4, 1, RngStream::new(9, 0)).unwrap();
        let mut bins: Vec<usize> = u.iter().map(|v| (v * 4.0).floor() as usize).collect();
        bins.sort_unstable();
        assert_eq!(bins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn every_column_stratified() {
        let n = 50;
        let u = unit_lhs(n, 6, RngStream::new(1, 2)).unwrap();
        for col in u.column_iter() {
            let mut bins: Vec<usize> = col.iter().map(|v| (v * n as f64).floor() as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn normal_marginals_centered() {
        let x = lhs_sample(1000, 2, RngStream::new(5, 0)).unwrap();
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / 1000.0;
            assert!(mean.abs() < 0.1);
        }
    }

    #[test]
    fn deterministic() {
        let s = RngStream::new(77, 3);
        assert_eq!(lhs_sample(4, 3, s).unwrap(), lhs_sample(4, 3, s).unwrap());
    }

    #[test]
    fn rejects_single_point() {
        assert!(lhs_sample(1, 2, RngStream::new(0, 0)).is_err());
    }
}
