//! Post-hoc correction of surrogate working values near a threshold.
//!
//! Intermediate thresholds are recomputed after replacing, batch by batch,
//! the surrogate values of the lowest-ranked samples with true evaluations;
//! the final failure fraction likewise replaces the samples closest to zero.
//! Replaced values are stored in the design set.

use serde::{Deserialize, Serialize};

use crate::design::DesignSet;
use crate::error::{Error, Result};
use crate::limit_state::Model;
use crate::sample::{EvalKind, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// Samples replaced per batch.
    pub delta_n: usize,
    /// Threshold tolerance relative to the uncorrected threshold.
    pub threshold_rel_tol: f64,
    /// Probability tolerance relative to `max(P0, 1/N)`.
    pub probability_rel_tol: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self { delta_n: 10, threshold_rel_tol: 1e-3, probability_rel_tol: 0.05 }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_n == 0 {
            return Err(Error::Config("delta_n must be at least 1".into()));
        }
        if !(self.threshold_rel_tol >= 0.0) || !(self.probability_rel_tol >= 0.0) {
            return Err(Error::Config("correction tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Number of seeds `N p0`, rounded to the nearest integer.
pub fn seed_count(n: usize, p0: f64) -> usize {
    (n as f64 * p0).round() as usize
}

/// Midpoint p0-quantile of ascending `sorted`: the mean of the `N p0`-th and
/// `(N p0 + 1)`-th order statistics.
pub fn quantile_midpoint(sorted: &[f64], p0: f64) -> f64 {
    let ns = seed_count(sorted.len(), p0).clamp(1, sorted.len() - 1);
    0.5 * (sorted[ns - 1] + sorted[ns])
}

/// Indices of `samples` sorted by working value, ties by index.
pub fn order_by_value(samples: &[Sample]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].value().total_cmp(&samples[b].value()).then(a.cmp(&b)));
    idx
}

fn threshold_of(samples: &[Sample], p0: f64) -> f64 {
    let sorted: Vec<f64> = order_by_value(samples).into_iter().map(|i| samples[i].value()).collect();
    quantile_midpoint(&sorted, p0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    /// Corrected threshold or probability.
    pub value: f64,
    /// Value before any replacement.
    pub initial: f64,
    pub evaluations: usize,
    pub batches: usize,
}

fn replace(s: &mut Sample, design: &mut DesignSet, model: &Model) -> Result<()> {
    let g = model.evaluate(&s.coords)?;
    design.insert(&s.coords, g)?;
    s.eval = Some(g);
    s.kind = EvalKind::True;
    Ok(())
}

/// Replaces surrogate values in ascending working-value order, `delta_n` at a
/// time, recomputing the midpoint quantile after each batch. Stops when the
/// threshold moves by at most `eps_s` (and `eps_s > 0`) or no surrogate
/// values remain. Samples already evaluated truly are skipped at no cost.
pub fn fix_intermediate_threshold(
    samples: &mut [Sample],
    p0: f64,
    delta_n: usize,
    eps_s: f64,
    model: &Model,
    design: &mut DesignSet,
) -> Result<Corrected> {
    if samples.len() < 2 {
        return Err(Error::Domain("threshold correction needs at least 2 samples".into()));
    }
    let initial = threshold_of(samples, p0);
    let mut c = initial;
    let mut evaluations = 0;
    let mut batches = 0;
    loop {
        let batch: Vec<usize> =
            order_by_value(samples).into_iter().filter(|&i| !samples[i].is_true()).take(delta_n.max(1)).collect();
        if batch.is_empty() {
            break;
        }
        for &i in &batch {
            replace(&mut samples[i], design, model)?;
        }
        evaluations += batch.len();
        batches += 1;
        let next = threshold_of(samples, p0);
        let moved = (next - c).abs();
        c = next;
        if eps_s > 0.0 && moved <= eps_s {
            break;
        }
    }
    Ok(Corrected { value: c, initial, evaluations, batches })
}

/// [`fix_intermediate_threshold`] with `eps_s = rel_tol * |c0|`.
pub fn fix_intermediate_threshold_rel(
    samples: &mut [Sample],
    p0: f64,
    cfg: &CorrectionConfig,
    model: &Model,
    design: &mut DesignSet,
) -> Result<Corrected> {
    let c0 = threshold_of(samples, p0);
    fix_intermediate_threshold(samples, p0, cfg.delta_n, cfg.threshold_rel_tol * c0.abs(), model, design)
}

/// Failure fraction `#{value <= 0} / N`.
pub fn failure_fraction(samples: &[Sample]) -> f64 {
    samples.iter().filter(|s| s.value() <= 0.0).count() as f64 / samples.len() as f64
}

/// Replaces surrogate values in ascending `|value|` order, `delta_n` at a
/// time, until the failure fraction moves by at most `eps_s` (and
/// `eps_s > 0`) or no surrogate values remain.
pub fn fix_final_probability(
    samples: &mut [Sample],
    delta_n: usize,
    eps_s: f64,
    model: &Model,
    design: &mut DesignSet,
) -> Result<Corrected> {
    if samples.is_empty() {
        return Err(Error::Domain("probability correction needs samples".into()));
    }
    let initial = failure_fraction(samples);
    let mut p = initial;
    let mut evaluations = 0;
    let mut batches = 0;
    loop {
        let mut open: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].is_true()).collect();
        if open.is_empty() {
            break;
        }
        open.sort_by(|&a, &b| samples[a].value().abs().total_cmp(&samples[b].value().abs()).then(a.cmp(&b)));
        open.truncate(delta_n.max(1));
        for &i in &open {
            replace(&mut samples[i], design, model)?;
        }
        evaluations += open.len();
        batches += 1;
        let next = failure_fraction(samples);
        let moved = (next - p).abs();
        p = next;
        if eps_s > 0.0 && moved <= eps_s {
            break;
        }
    }
    Ok(Corrected { value: p, initial, evaluations, batches })
}

/// [`fix_final_probability`] with `eps_s = rel_tol * max(P0, 1/N)`.
pub fn fix_final_probability_rel(
    samples: &mut [Sample],
    cfg: &CorrectionConfig,
    model: &Model,
    design: &mut DesignSet,
) -> Result<Corrected> {
    let p0 = failure_fraction(samples);
    let eps = cfg.probability_rel_tol * p0.max(1.0 / samples.len() as f64);
    fix_final_probability(samples, cfg.delta_n, eps, model, design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_state::LimitState;
    use std::sync::Arc;

    /// g(x) = x[0]: the true value is the first coordinate.
    struct First;
    impl LimitState for First {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(x[0])
        }
    }

    fn model() -> Model {
        Model::new(Arc::new(First))
    }

    #[test]
    fn quantile_of_one_to_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_midpoint(&v, 0.1), 1.5);
        assert_eq!(quantile_midpoint(&v, 0.5), 5.5);
    }

    #[test]
    fn threshold_fixed_point_with_true_values() {
        let m = model();
        let mut ds = DesignSet::new(1);
        let mut s: Vec<Sample> = (1..=10).map(|k| Sample::with_true(vec![f64::from(k)], f64::from(k))).collect();
        let r = fix_intermediate_threshold(&mut s, 0.1, 10, 1e-3, &m, &mut ds).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(r.batches <= 2);
        assert_eq!(m.evaluations(), 0);
    }

    #[test]
    fn threshold_from_surrogates() {
        // surrogate values misorder the samples; true values are 1..10
        let m = model();
        let mut ds = DesignSet::new(1);
        let wrong = [5.0, 0.5, 7.0, 0.8, 9.0, 6.0, 3.0, 2.0, 4.0, 8.0];
        let mut s: Vec<Sample> = (1..=10).map(|k| Sample::with_surrogate(vec![f64::from(k)], wrong[k as usize - 1])).collect();
        let r = fix_intermediate_threshold(&mut s, 0.1, 10, 1e-3, &m, &mut ds).unwrap();
        assert_eq!(r.initial, 0.65);
        assert_eq!(r.value, 1.5);
        assert_eq!(r.evaluations, 10);
        assert_eq!(ds.len(), 10);
    }

    #[test]
    fn threshold_exhaustion_matches_all_true() {
        let m = model();
        let mut ds = DesignSet::new(1);
        let xs: Vec<f64> = (0..97).map(|k| ((k * 37) % 97) as f64 * 0.1 - 3.0).collect();
        let mut s: Vec<Sample> = xs.iter().map(|&x| Sample::with_surrogate(vec![x], x + 0.3 * (x * 7.0).sin())).collect();
        let r = fix_intermediate_threshold(&mut s, 0.1, 7, 0.0, &m, &mut ds).unwrap();
        let mut truth = xs.clone();
        truth.sort_by(f64::total_cmp);
        assert!((r.value - quantile_midpoint(&truth, 0.1)).abs() <= 1e-12);
        assert_eq!(r.evaluations, 97);
        // batches of 7 (the last one short)
        assert_eq!(r.batches, 14);
    }

    #[test]
    fn probability_unchanged_when_classification_is_right() {
        let m = model();
        let mut ds = DesignSet::new(1);
        let xs = [-0.5, -0.1, 0.2, 0.4, 1.0, 2.0];
        let mut s: Vec<Sample> = xs.iter().map(|&x| Sample::with_surrogate(vec![x], 2.0 * x)).collect();
        let r = fix_final_probability(&mut s, 2, 0.05 / 6.0, &m, &mut ds).unwrap();
        assert_eq!(r.value, 2.0 / 6.0);
        assert_eq!(r.batches, 1);
        assert_eq!(r.evaluations, 2);
    }

    #[test]
    fn single_flip_is_corrected() {
        let m = model();
        let mut ds = DesignSet::new(1);
        // true value 0.05 > 0, surrogate says -0.01: misclassified and nearest zero
        let mut s = vec![Sample::with_surrogate(vec![0.05], -0.01)];
        s.extend([-2.0, -1.0, 1.0, 2.0, 3.0].iter().map(|&x| Sample::with_surrogate(vec![x], x)));
        let r = fix_final_probability(&mut s, 1, 1e-12, &m, &mut ds).unwrap();
        assert_eq!(r.initial, 3.0 / 6.0);
        assert_eq!(r.value, 2.0 / 6.0);
        assert!(s[0].is_true());
    }

    #[test]
    fn probability_exhaustion_matches_all_true() {
        let m = model();
        let mut ds = DesignSet::new(1);
        let xs: Vec<f64> = (0..53).map(|k| ((k * 11) % 53) as f64 * 0.05 - 1.0).collect();
        let mut s: Vec<Sample> = xs.iter().map(|&x| Sample::with_surrogate(vec![x], -x + 0.1)).collect();
        let r = fix_final_probability(&mut s, 4, 0.0, &m, &mut ds).unwrap();
        let truth = xs.iter().filter(|&&x| x <= 0.0).count() as f64 / 53.0;
        assert_eq!(r.value.to_bits(), truth.to_bits());
        assert_eq!(r.evaluations, 53);
    }

    #[test]
    fn batches_never_exceed_delta_n() {
        let m = model();
        let mut ds = DesignSet::new(1);
        let mut s: Vec<Sample> = (0..25).map(|k| Sample::with_surrogate(vec![f64::from(k) - 12.0], f64::from(k))).collect();
        let r = fix_final_probability(&mut s, 10, 0.0, &m, &mut ds).unwrap();
        assert_eq!((r.batches, r.evaluations), (3, 25));
    }
}
