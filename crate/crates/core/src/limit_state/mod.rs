//! Benchmark limit-state functions behind one counted evaluation interface.

mod analytic;
mod oscillator;
mod pca;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use analytic::{FourBranch, Hypersphere, Linear, Quadratic};
pub use oscillator::{loading_psi, Oscillator, OscillatorConfig};
pub use pca::{pca_loading_reduction, LoadingPca, PcaOscillator};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A deterministic black-box limit state; failure is `value(x) <= 0`.
pub trait LimitState: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
}

/// Wraps a limit state with a counter of true evaluations.
pub struct Model {
    inner: Arc<dyn LimitState>,
    counter: AtomicU64,
}

impl Model {
    pub fn new(inner: Arc<dyn LimitState>) -> Self {
        Self { inner, counter: AtomicU64::new(0) }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// One true evaluation; always advances the counter by one.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        if x.len() != self.inner.dim() {
            return Err(Error::Dimension { expected: self.inner.dim(), got: x.len() });
        }
        self.inner.value(x)
    }

    pub fn evaluations(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &Arc<dyn LimitState> {
        &self.inner
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("dim", &self.dim())
            .field("evaluations", &self.evaluations())
            .finish()
    }
}

/// Catalog ids accepted by [`BenchmarkSpec`].
pub const BENCHMARK_IDS: [&str; 6] = ["g11", "g12", "g2", "g3", "oscillator", "oscillator-pca"];

/// Benchmark selection plus its shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub id: String,
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Offset of the linear benchmarks; `P_F = Phi(-beta)` for g11.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub oscillator: OscillatorConfig,
    #[serde(default = "default_pca_realizations")]
    pub pca_realizations: usize,
    #[serde(default)]
    pub pca_seed: u64,
}

fn default_dim() -> usize {
    2
}
fn default_beta() -> f64 {
    4.0
}
fn default_kappa() -> f64 {
    0.2
}
fn default_tau() -> f64 {
    5.26
}
fn default_nu() -> f64 {
    2.0
}
fn default_pca_realizations() -> usize {
    5000
}

impl BenchmarkSpec {
    pub fn new(id: &str, d: usize) -> Self {
        Self {
            id: id.to_string(),
            d,
            beta: default_beta(),
            kappa: default_kappa(),
            tau: default_tau(),
            nu: default_nu(),
            oscillator: OscillatorConfig::default(),
            pca_realizations: default_pca_realizations(),
            pca_seed: 0,
        }
    }

    /// Input dimension after any preprocessing.
    pub fn input_dim(&self) -> usize {
        match self.id.as_str() {
            "g2" => 2,
            "oscillator" => self.oscillator.d,
            "oscillator-pca" => self.oscillator.n_time,
            _ => self.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !BENCHMARK_IDS.contains(&self.id.as_str()) {
            return Err(Error::UnknownBenchmark(self.id.clone()));
        }
        match self.id.as_str() {
            "g11" | "g3" if self.d < 1 => Err(Error::Config("d must be >= 1".into())),
            "g12" if self.d < 2 => Err(Error::Config("g12 needs d >= 2".into())),
            "g2" if self.d != 2 => Err(Error::Config("g2 is two-dimensional".into())),
            "g3" if !(self.tau > 0.0 && (0.0..=4.0).contains(&self.nu)) => {
                Err(Error::Config("g3 needs tau > 0 and nu in [0, 4]".into()))
            }
            "oscillator" | "oscillator-pca" => self.oscillator.validate(),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LimitState>> {
        self.validate()?;
        Ok(match self.id.as_str() {
            "g11" => Arc::new(Linear::new(self.d, self.beta)),
            "g12" => Arc::new(Quadratic::new(self.d, self.kappa, self.beta)),
            "g2" => Arc::new(FourBranch),
            "g3" => Arc::new(Hypersphere::new(self.d, self.tau, self.nu)),
            "oscillator" => Arc::new(Oscillator::new(self.oscillator.clone())?),
            "oscillator-pca" => {
                let stream = RngStream::new(self.pca_seed, crate::rng::tag::PCA);
                let pca = pca_loading_reduction(&self.oscillator, self.pca_realizations, stream)?;
                Arc::new(pca.into_limit_state()?)
            }
            other => return Err(Error::UnknownBenchmark(other.to_string())),
        })
    }

    /// Published reference failure probability, when one exists for these parameters.
    pub fn reference_pf(&self) -> Option<f64> {
        let default_shape = self.beta == 4.0 && self.kappa == 0.2;
        match self.id.as_str() {
            "g11" if self.beta == 4.0 => Some(3.17e-5),
            "g11" => Some(crate::normal::cdf(-self.beta)),
            "g12" if self.d == 2 && default_shape => Some(6.41e-5),
            "g2" => Some(2.26e-3),
            "g3" if self.d == 2 && self.tau == 5.26 => Some(1e-6),
            "oscillator" => Some(8.3e-4),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_counts_every_call() {
        let m = Model::new(BenchmarkSpec::new("g11", 2).build().unwrap());
        for _ in 0..5 {
            m.evaluate(&[0.1, 0.2]).unwrap();
        }
        assert_eq!(m.evaluations(), 5);
        assert!(m.evaluate(&[0.1]).is_err());
        assert_eq!(m.evaluations(), 6);
    }

    #[test]
    fn catalog_ids() {
        for id in ["g11", "g12", "g2", "g3"] {
            let spec = BenchmarkSpec::new(id, 2);
            assert_eq!(spec.build().unwrap().dim(), 2);
        }
        assert!(matches!(BenchmarkSpec::new("g99", 2).build(), Err(Error::UnknownBenchmark(_))));
        assert!(BenchmarkSpec::new("g2", 3).build().is_err());
    }
}
