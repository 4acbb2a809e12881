//! Local surrogate approximation inside the subset chains.
//!
//! Each chain move is classified with a surrogate fitted on the design
//! points nearest to the candidate. Uncertain predictions trigger
//! refinement (a true evaluation at a point chosen by the U-function), and
//! candidates whose classification stays ambiguous fall back to a true
//! evaluation.

mod controller;
mod factory;

pub use controller::{
    classify, local_start, refine_select, Fallback, LevelContext, StartOutcome, StepReport,
};
pub use factory::{
    GpFactory, LocalFit, PerfectFactory, PlsGpFactory, QuadraticFactory, Region, SurrogateFactory,
};

use serde::{Deserialize, Serialize};

use crate::design::DesignSet;
use crate::error::{Error, Result};
use crate::normal;
use crate::surrogate::{Prediction, Z95};

/// Dimension above which the local design uses `d + 1` points.
pub const HIGH_DIM_THRESHOLD: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementPolicy {
    /// Error-indicator threshold above which a prediction is refined.
    pub gamma_t: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_refines_per_step: usize,
    /// Candidate pool for the U-function search.
    pub pool_size: usize,
}

impl Default for RefinementPolicy {
    fn default() -> Self {
        Self { gamma_t: 0.05, beta0: 1.0, beta1: 0.01, beta2: 2.0, max_refines_per_step: 5, pool_size: 200 }
    }
}

impl RefinementPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_t > 0.0) {
            return Err(Error::Config(format!("gamma_t must be positive, got {}", self.gamma_t)));
        }
        if self.max_refines_per_step == 0 {
            return Err(Error::Config("max_refines_per_step must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be at least 1".into()));
        }
        if !(self.beta1 >= 0.0) || !self.beta0.is_finite() || !self.beta2.is_finite() {
            return Err(Error::Config("beta parameters must be finite with beta1 >= 0".into()));
        }
        Ok(())
    }
}

/// Local design size: `ceil(sqrt(d) (d+1)(d+2)/2)`, or `d + 1` in high dimension.
pub fn default_n0(d: usize, high_dim: bool) -> usize {
    if high_dim {
        d + 1
    } else {
        let full = ((d + 1) * (d + 2) / 2) as f64;
        ((d as f64).sqrt() * full - 1e-9).ceil() as usize
    }
}

/// Whether a problem of dimension `d` counts as high-dimensional by default.
pub fn is_high_dim(d: usize) -> bool {
    d > HIGH_DIM_THRESHOLD
}

/// Euclidean neighbourhood holding exactly `members.len()` design points.
#[derive(Debug, Clone, PartialEq)]
pub struct BallQuery {
    pub center: Vec<f64>,
    pub radius: f64,
    pub members: Vec<usize>,
}

/// The `n0` design points nearest to `v`; ties go to the earlier insertion.
pub fn select_ball(v: &[f64], design: &DesignSet, n0: usize) -> Result<BallQuery> {
    let near = design.nearest(v, n0)?;
    let radius = near.last().map_or(0.0, |&(_, d)| d);
    Ok(BallQuery { center: v.to_vec(), radius, members: near.into_iter().map(|(i, _)| i).collect() })
}

/// Normalized width of the 95% interval, `2 * 1.96 * sigma / |mu|`;
/// infinite when `|mu|` vanishes.
pub fn error_indicator(pred: &Prediction) -> f64 {
    if pred.sigma == 0.0 {
        return 0.0;
    }
    if pred.mu.abs() < 1e-12 {
        return f64::INFINITY;
    }
    2.0 * Z95 * pred.sigma / pred.mu.abs()
}

/// Probability of an unconditional refinement at chain step `s` of level `j`:
/// `beta1 * s^(-beta0 * j^beta2)`, clamped to [0, 1].
pub fn random_refine_probability(s: usize, j: usize, policy: &RefinementPolicy) -> f64 {
    let exponent = -policy.beta0 * (j as f64).powf(policy.beta2);
    (policy.beta1 * (s as f64).powf(exponent)).clamp(0.0, 1.0)
}

/// Probability that the surrogate puts the point on the wrong side of `c`.
pub fn misclassification_probability(mu: f64, sigma: f64, c: f64) -> f64 {
    if sigma == 0.0 {
        return if mu == c { 0.5 } else { 0.0 };
    }
    normal::cdf(-(mu - c).abs() / sigma)
}

/// Standardized distance `|mu - c| / sigma`; zero-variance predictions are
/// infinitely far unless they sit exactly on `c`.
pub fn u_function(pred: &Prediction, c: f64) -> f64 {
    let gap = (pred.mu - c).abs();
    if pred.sigma > 0.0 {
        gap / pred.sigma
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn local_design_sizes() {
        assert_eq!(default_n0(2, false), 9);
        assert_eq!(default_n0(1, false), 3);
        assert_eq!(default_n0(4, false), 30);
        assert_eq!(default_n0(100, true), 101);
        assert!(!is_high_dim(20));
        assert!(is_high_dim(21));
    }

    #[test]
    fn ball_in_one_dimension() {
        let mut ds = DesignSet::new(1);
        for x in [0.0, 1.0, 2.0, 3.0] {
            ds.insert(&[x], x).unwrap();
        }
        let b = select_ball(&[0.6], &ds, 2).unwrap();
        assert_eq!(b.members, vec![1, 0]);
        assert_abs_diff_eq!(b.radius, 0.6, epsilon = 1e-15);
        let b = select_ball(&[2.0], &ds, 1).unwrap();
        assert_eq!(b.members, vec![2]);
        assert!(matches!(select_ball(&[0.0], &ds, 5), Err(Error::DesignTooSmall { have: 4, need: 5 })));
    }

    #[test]
    fn ball_ties_follow_insertion_order() {
        let mut a = DesignSet::new(1);
        let mut b = DesignSet::new(1);
        for x in [-1.0, 1.0, 5.0] {
            a.insert(&[x], 0.0).unwrap();
        }
        for x in [1.0, -1.0, 5.0] {
            b.insert(&[x], 0.0).unwrap();
        }
        let pa: Vec<f64> = select_ball(&[0.0], &a, 1).unwrap().members.iter().map(|&i| a.point(i)[0]).collect();
        let pb: Vec<f64> = select_ball(&[0.0], &b, 1).unwrap().members.iter().map(|&i| b.point(i)[0]).collect();
        assert_eq!(pa, vec![-1.0]);
        assert_eq!(pb, vec![1.0]);
        // without ties, insertion order does not matter
        let qa: Vec<f64> = select_ball(&[4.0], &a, 2).unwrap().members.iter().map(|&i| a.point(i)[0]).collect();
        let qb: Vec<f64> = select_ball(&[4.0], &b, 2).unwrap().members.iter().map(|&i| b.point(i)[0]).collect();
        assert_eq!(qa, qb);
    }

    #[test]
    fn error_indicator_examples() {
        assert_eq!(error_indicator(&Prediction { mu: 3.0, sigma: 0.0 }), 0.0);
        assert_abs_diff_eq!(error_indicator(&Prediction { mu: 2.0, sigma: 0.1 }), 0.196, epsilon = 1e-15);
        assert_abs_diff_eq!(error_indicator(&Prediction { mu: -2.0, sigma: 0.1 }), 0.196, epsilon = 1e-15);
        assert_eq!(error_indicator(&Prediction { mu: 0.0, sigma: 0.1 }), f64::INFINITY);
    }

    #[test]
    fn random_refinement_examples() {
        let p = RefinementPolicy::default();
        for j in 1..5 {
            assert_abs_diff_eq!(random_refine_probability(1, j, &p), 0.01, epsilon = 1e-18);
        }
        assert_abs_diff_eq!(random_refine_probability(2, 1, &p), 0.005, epsilon = 1e-18);
        assert_abs_diff_eq!(random_refine_probability(2, 2, &p), 0.000625, epsilon = 1e-18);
        let big = RefinementPolicy { beta1: 5.0, ..p };
        assert_eq!(random_refine_probability(1, 1, &big), 1.0);
    }

    #[test]
    fn misclassification_examples() {
        assert_eq!(misclassification_probability(1.0, 0.3, 1.0), 0.5);
        assert_eq!(misclassification_probability(1.0, 0.0, 1.0), 0.5);
        assert_abs_diff_eq!(misclassification_probability(1.0 + 1.96 * 0.5, 0.5, 1.0), 0.024_997_895_148_220_43, epsilon = 1e-12);
        assert_eq!(misclassification_probability(1.1, 0.0, 1.0), 0.0);
        assert!(misclassification_probability(1.1, 1e-300, 1.0) < 1e-300);
    }

    #[test]
    fn policy_validation() {
        assert!(RefinementPolicy::default().validate().is_ok());
        assert!(RefinementPolicy { gamma_t: 0.0, ..Default::default() }.validate().is_err());
        assert!(RefinementPolicy { max_refines_per_step: 0, ..Default::default() }.validate().is_err());
    }
}
