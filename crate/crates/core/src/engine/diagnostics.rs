//! Level-count and coefficient-of-variation diagnostics.

use serde::{Deserialize, Serialize};

/// Expected number of intermediate levels, `floor(ln P_F / ln p0)`.
pub fn expected_levels(pf: f64, p0: f64) -> usize {
    assert!(pf > 0.0 && pf < 1.0 && p0 > 0.0 && p0 < 1.0, "probabilities must lie in (0, 1)");
    // guard against ratios such as 5.999999999999999 for exact powers
    (pf.ln() / p0.ln() + 1e-9).floor() as usize
}

/// True evaluations of standard subset simulation with `levels` levels:
/// `N + N (1 - p0) (L - 1)`.
pub fn total_evaluations(n: usize, p0: f64, levels: usize) -> usize {
    let seeds = (n as f64 * p0).round() as usize;
    n + (n - seeds) * levels.saturating_sub(1)
}

/// Coefficient of variation of one conditional probability estimate,
/// `sqrt((1 - P) / (N P) * (1 + gamma))`. Zero at `P = 1`, `None` at `P = 0`.
pub fn level_cov(p: f64, n: usize, gamma: f64) -> Option<f64> {
    if !(p > 0.0) {
        return None;
    }
    Some(((1.0 - p).max(0.0) / (n as f64 * p) * (1.0 + gamma)).sqrt())
}

/// Chain correlation factor `gamma = 2 sum_k (1 - k Ns / N) rho(k)` from the
/// indicator sequences of `Ns` equal-length chains. The flag is set when
/// `P (1 - P) = 0`, in which case `gamma = 0`.
pub fn chain_autocorrelation(chains: &[Vec<u8>], p: f64) -> (f64, bool) {
    let ns = chains.len();
    if ns == 0 {
        return (0.0, true);
    }
    let len = chains[0].len();
    assert!(chains.iter().all(|c| c.len() == len), "chains must have equal length");
    let var = p * (1.0 - p);
    if var <= 0.0 {
        return (0.0, true);
    }
    let n = (ns * len) as f64;
    let mut gamma = 0.0;
    for k in 1..len {
        let mut acc = 0u64;
        for c in chains {
            for t in 0..len - k {
                acc += u64::from(c[t] & c[t + k]);
            }
        }
        let pairs = (ns * (len - k)) as f64;
        let rho = (acc as f64 / pairs - p * p) / var;
        gamma += (1.0 - k as f64 * ns as f64 / n) * rho;
    }
    (2.0 * gamma, false)
}

/// How per-level CoVs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovBound {
    /// Uncorrelated level estimates: `sqrt(sum delta^2)`.
    Independent,
    /// Fully correlated level estimates: `sum delta`.
    Correlated,
}

pub fn total_cov(deltas: &[f64], bound: CovBound) -> f64 {
    match bound {
        CovBound::Independent => deltas.iter().map(|d| d * d).sum::<f64>().sqrt(),
        CovBound::Correlated => deltas.iter().sum(),
    }
}
