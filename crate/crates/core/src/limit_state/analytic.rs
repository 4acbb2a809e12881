use std::f64::consts::SQRT_2;

use super::LimitState;
use crate::error::Result;

/// `beta - sum(theta) / sqrt(d)`; failure probability `Phi(-beta)` in any dimension.
#[derive(Debug, Clone)]
pub struct Linear {
    pub d: usize,
    pub beta: f64,
}

impl Linear {
    pub fn new(d: usize, beta: f64) -> Self {
        Self { d, beta }
    }
}

impl LimitState for Linear {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.beta - x.iter().sum::<f64>() / (self.d as f64).sqrt())
    }
}

/// Linear benchmark bent by `-(kappa/4)(theta_1 - theta_2)^2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub d: usize,
    pub kappa: f64,
    pub beta: f64,
}

impl Quadratic {
    pub fn new(d: usize, kappa: f64, beta: f64) -> Self {
        Self { d, kappa, beta }
    }
}

impl LimitState for Quadratic {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let diff = x[0] - x[1];
        Ok(self.beta - 0.25 * self.kappa * diff * diff - x.iter().sum::<f64>() / (self.d as f64).sqrt())
    }
}

/// Series system with four component limit states in two dimensions.
#[derive(Debug, Clone, Copy)]
pub struct FourBranch;

impl FourBranch {
    pub fn branches(x: &[f64]) -> [f64; 4] {
        let (a, b) = (x[0], x[1]);
        let quad = 3.0 + 0.1 * (a - b) * (a - b);
        let diag = (a + b) / SQRT_2;
        let off = 7.0 / SQRT_2;
        [quad - diag, quad + diag, a - b + off, b - a + off]
    }
}

impl LimitState for FourBranch {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(Self::branches(x).into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Failure outside a hypersphere of radius `tau`; `nu` tilts the gradient along `theta_1`.
#[derive(Debug, Clone)]
pub struct Hypersphere {
    pub d: usize,
    pub tau: f64,
    pub nu: f64,
}

impl Hypersphere {
    pub fn new(d: usize, tau: f64, nu: f64) -> Self {
        Self { d, tau, nu }
    }
}

impl LimitState for Hypersphere {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let rho = r2.sqrt() / self.tau;
        let p = rho.powf(self.nu);
        Ok(1.0 - r2 / (self.tau * self.tau) - (x[0] / self.tau) * (1.0 - p) / (1.0 + p))
    }
}
