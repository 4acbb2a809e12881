//! Adaptive conditional sampling for the subset chains.
//!
//! A candidate is drawn coordinatewise from `N(rho_i x_i, 1 - rho_i^2)`,
//! which leaves the standard-normal law invariant, and is kept iff it lies
//! in the current intermediate failure domain. There is no Metropolis ratio.
//! The spreads `sigma_i = min(1, lambda * sigma_hat_i)` are tuned through
//! `lambda` toward a target acceptance rate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sample::{EvalKind, Sample};

pub const TARGET_ACCEPT: f64 = 0.44;
pub const INITIAL_LAMBDA: f64 = 0.6;
pub const ADAPT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    pub rho: Vec<f64>,
    pub lambda: f64,
    pub sigma_hat: Vec<f64>,
    pub target_accept: f64,
    /// Chains run between two adaptations.
    pub adapt_window: usize,
}

impl ProposalParams {
    pub fn new(sigma_hat: Vec<f64>, lambda: f64) -> Self {
        let mut p = Self {
            rho: vec![0.0; sigma_hat.len()],
            lambda,
            sigma_hat,
            target_accept: TARGET_ACCEPT,
            adapt_window: ADAPT_WINDOW,
        };
        p.refresh_rho();
        p
    }

    /// Unit base spreads with the default initial scaling.
    pub fn standard(d: usize) -> Self {
        Self::new(vec![1.0; d], INITIAL_LAMBDA)
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_hat.iter().map(|s| (self.lambda * s).min(1.0)).collect()
    }

    fn refresh_rho(&mut self) {
        self.rho = self.sigma().iter().map(|s| (1.0 - s * s).sqrt()).collect();
    }

    /// Replaces the base spreads, keeping `lambda`.
    pub fn with_sigma_hat(mut self, sigma_hat: Vec<f64>) -> Self {
        self.sigma_hat = sigma_hat;
        self.refresh_rho();
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposals: usize,
    pub accepts: usize,
}

impl ChainStats {
    pub fn record(&mut self, accepted: bool) {
        self.proposals += 1;
        self.accepts += usize::from(accepted);
    }

    pub fn merge(&mut self, other: ChainStats) {
        self.proposals += other.proposals;
        self.accepts += other.accepts;
    }

    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }
}

/// Candidate state for `current`.
pub fn propose<R: Rng + ?Sized>(current: &[f64], params: &ProposalParams, rng: &mut R) -> Vec<f64> {
    current
        .iter()
        .zip(&params.rho)
        .map(|(&x, &rho)| {
            let z: f64 = rng.sample(StandardNormal);
            rho * x + (1.0 - rho * rho).sqrt() * z
        })
        .collect()
}

/// Outcome of testing a candidate against the intermediate domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    pub value: f64,
    pub kind: EvalKind,
}

/// One chain move: propose, keep the candidate iff `in_domain` says so,
/// otherwise repeat the current state.
pub fn chain_step<R, F>(current: &Sample, params: &ProposalParams, rng: &mut R, in_domain: F) -> Result<(Sample, bool)>
where
    R: Rng + ?Sized,
    F: FnOnce(&[f64]) -> Result<Membership>,
{
    let v = propose(&current.coords, params, rng);
    let m = in_domain(&v)?;
    if m.inside {
        Ok((Sample { coords: v, eval: Some(m.value), kind: m.kind }, true))
    } else {
        Ok((current.clone(), false))
    }
}

/// Stochastic-approximation update of `lambda` from a window of chains;
/// `adaptation_index` counts adaptations from 1.
pub fn adapt(params: &ProposalParams, stats: &ChainStats, adaptation_index: usize) -> ProposalParams {
    let mut next = params.clone();
    if stats.proposals > 0 {
        let rate = stats.rate();
        let step = (rate - params.target_accept) / (adaptation_index.max(1) as f64).sqrt();
        next.lambda = (params.lambda.ln() + step).exp();
    }
    next.refresh_rho();
    next
}
