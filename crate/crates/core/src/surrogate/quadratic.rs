//! Local polynomial regression: a full quadratic in the standardized inputs,
//! reduced to a linear basis when the design cannot support it. The
//! predictive spread is the leave-one-out RMS residual.

use nalgebra::{DMatrix, DVector};

use super::{Prediction, Predictor};
use crate::error::{Error, Result};

const RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Linear,
    Quadratic,
}

impl Basis {
    pub fn size(self, d: usize) -> usize {
        match self {
            Basis::Linear => d + 1,
            Basis::Quadratic => (d + 1) * (d + 2) / 2,
        }
    }
}

fn features(z: &[f64], basis: Basis) -> Vec<f64> {
    let d = z.len();
    let mut f = Vec::with_capacity(basis.size(d));
    f.push(1.0);
    f.extend_from_slice(z);
    if basis == Basis::Quadratic {
        for i in 0..d {
            for j in i..d {
                f.push(z[i] * z[j]);
            }
        }
    }
    f
}

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    center: Vec<f64>,
    scale: Vec<f64>,
    basis: Basis,
    coef: DVector<f64>,
    sigma: f64,
}

impl QuadraticModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, d) = x.shape();
        if n != y.len() {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        if n < 2 {
            return Err(Error::Domain(format!("a regression needs at least 2 points, got {n}")));
        }
        let mut center = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for col in x.column_iter() {
            let m = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            center.push(m);
            scale.push(if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 1.0 });
        }
        let z: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| (x[(i, j)] - center[j]) / scale[j]).collect())
            .collect();
        let yv = DVector::from_column_slice(y);
        let first = if n >= Basis::Quadratic.size(d) { Basis::Quadratic } else { Basis::Linear };
        let mut tried = Vec::new();
        for basis in [first, Basis::Linear] {
            if tried.contains(&basis) {
                continue;
            }
            tried.push(basis);
            let p = basis.size(d);
            if n < p {
                continue;
            }
            let a = DMatrix::from_fn(n, p, |i, k| features(&z[i], basis)[k]);
            let svd = a.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let rank = svd.singular_values.iter().filter(|&&s| s > RCOND * smax).count();
            if rank < p {
                continue;
            }
            let coef = svd.solve(&yv, RCOND * smax).map_err(|e| Error::Numeric(e.to_string()))?;
            let resid = &yv - &a * &coef;
            let u = svd.u.as_ref().expect("left singular vectors requested");
            let mut acc = 0.0;
            let mut count = 0usize;
            for i in 0..n {
                let h: f64 = (0..p).map(|k| u[(i, k)] * u[(i, k)]).sum();
                if h < 1.0 - 1e-10 {
                    let e = resid[i] / (1.0 - h);
                    acc += e * e;
                    count += 1;
                }
            }
            let sigma = if count > 0 {
                (acc / count as f64).sqrt()
            } else {
                let m = yv.mean();
                (yv.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
            };
            return Ok(Self { center, scale, basis, coef, sigma });
        }
        Err(Error::Numeric(format!("polynomial basis is rank deficient on {n} points in {d} dimensions")))
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Coefficients of the second-order terms (standardized coordinates);
    /// empty for a linear basis.
    pub fn quadratic_coefficients(&self) -> &[f64] {
        let d = self.center.len();
        match self.basis {
            Basis::Linear => &[],
            Basis::Quadratic => &self.coef.as_slice()[d + 1..],
        }
    }

    pub fn mean(&self, v: &[f64]) -> f64 {
        let z: Vec<f64> = v.iter().zip(&self.center).zip(&self.scale).map(|((a, c), s)| (a - c) / s).collect();
        features(&z, self.basis).iter().zip(self.coef.iter()).map(|(f, c)| f * c).sum()
    }
}

impl Predictor for QuadraticModel {
    fn predict(&self, v: &[f64]) -> Prediction {
        Prediction { mu: self.mean(v), sigma: self.sigma }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve;
    use crate::lhs::lhs_sample;
    use crate::rng::RngStream;

    fn design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        lhs_sample(n, d, RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn exact_quadratic_is_reproduced() {
        let x = design(15, 2, 1);
        let f = |a: f64, b: f64| 1.0 - 2.0 * a + 0.5 * b + 0.3 * a * a - 0.7 * a * b + 1.1 * b * b;
        let y: Vec<f64> = (0..15).map(|i| f(x[(i, 0)], x[(i, 1)])).collect();
        let m = QuadraticModel::fit(&x, &y).unwrap();
        assert_eq!(m.basis(), Basis::Quadratic);
        for i in 0..15 {
            assert!((m.mean(&[x[(i, 0)], x[(i, 1)]]) - y[i]).abs() < 1e-8);
        }
        assert!((m.mean(&[0.3, -2.5]) - f(0.3, -2.5)).abs() < 1e-8);
        assert!(m.predict(&[0.0, 0.0]).sigma < 1e-8);
    }

    #[test]
    fn linear_data_has_no_curvature() {
        let x = design(12, 2, 2);
        let y: Vec<f64> = (0..12).map(|i| 4.0 - (x[(i, 0)] + x[(i, 1)]) / 2f64.sqrt()).collect();
        let m = QuadraticModel::fit(&x, &y).unwrap();
        for c in m.quadratic_coefficients() {
            assert!(c.abs() <= 1e-8, "{c}");
        }
    }

    #[test]
    fn matches_normal_equations() {
        let x = design(12, 2, 3);
        let mut rng = RngStream::new(3, 9).rng();
        let y: Vec<f64> = (0..12).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let m = QuadraticModel::fit(&x, &y).unwrap();
        // raw (unstandardized) monomials span the same space
        let row = |a: f64, b: f64| vec![1.0, a, b, a * a, a * b, b * b];
        let a = DMatrix::from_fn(12, 6, |i, k| row(x[(i, 0)], x[(i, 1)])[k]);
        let ata = a.transpose() * &a;
        let aty = a.transpose() * DVector::from_column_slice(&y);
        let c = solve(&ata, &aty).unwrap();
        for i in 0..12 {
            let r = DVector::from_vec(row(x[(i, 0)], x[(i, 1)]));
            assert!((m.mean(&[x[(i, 0)], x[(i, 1)]]) - r.dot(&c)).abs() < 1e-8);
        }
        assert!(m.predict(&[0.0, 0.0]).sigma > 0.0);
    }

    #[test]
    fn small_design_falls_back_to_linear() {
        let x = design(4, 2, 4);
        let y = [1.0, 2.0, 0.5, 3.0];
        assert_eq!(QuadraticModel::fit(&x, &y).unwrap().basis(), Basis::Linear);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(QuadraticModel::fit(&x, &[0.0, 1.0, 2.0]).is_err());
    }
}
