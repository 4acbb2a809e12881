//! Local surrogates of the limit-state function: Gaussian-process regression
//! and a quadratic least-squares fallback.

pub mod gp;
pub mod optimize;
pub mod quadratic;

pub use gp::{GpConfig, GpModel};
pub use quadratic::QuadraticModel;

/// z-value of the two-sided 95% prediction interval.
pub const Z95: f64 = 1.96;

/// Predictive mean and standard deviation at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    pub sigma: f64,
}

impl Prediction {
    /// Upper bound of the 95% interval.
    pub fn upper(&self) -> f64 {
        self.mu + Z95 * self.sigma
    }

    /// Lower bound of the 95% interval.
    pub fn lower(&self) -> f64 {
        self.mu - Z95 * self.sigma
    }
}

/// A fitted surrogate that can be queried at arbitrary points.
pub trait Predictor: Send + Sync {
    fn predict(&self, v: &[f64]) -> Prediction;
}
