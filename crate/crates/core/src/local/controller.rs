//! Classification of chain candidates with local surrogates, and the
//! surrogate-assisted level-0 start.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::factory::{LocalFit, SurrogateFactory};
use super::{error_indicator, random_refine_probability, u_function, RefinementPolicy};
use crate::design::{DesignSet, DUPLICATE_TOL};
use crate::error::Result;
use crate::limit_state::Model;
use crate::mcmc::Membership;
use crate::sample::{EvalKind, Sample};

/// Slack on the previous threshold when testing nestedness.
pub const NESTEDNESS_TOL: f64 = 1e-9;

/// Thresholds and position of the chain step being classified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelContext {
    /// Current threshold `c_j`; candidates are accepted iff their value is at most this.
    pub threshold: f64,
    /// Previous threshold `c_{j-1}` (`+inf` for the first chain level).
    pub previous: f64,
    /// Chain level `j >= 1`.
    pub level: usize,
    /// Chain step `s >= 1`.
    pub step: usize,
}

/// Why a candidate was evaluated with the true model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// The refinement budget ran out with the error indicator still high.
    Budget,
    /// The 95% interval straddles the current threshold.
    Straddle,
    /// The prediction would accept a point the upper bound places outside
    /// the previous level's domain.
    Nestedness,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub true_evals: usize,
    pub refinements: usize,
    pub random_refinements: usize,
    pub fallback: Option<Fallback>,
    /// A refinement pool was empty after excluding design points.
    pub degenerate_pool: bool,
}

/// Picks the refinement point: among `pool_size` uniform draws in the fit's
/// region (excluding existing design points), the one minimizing
/// `|mu - c| / sigma`. Ties go to the smaller `|mu - c|`, then the earlier
/// draw. Returns the point and whether the pool was empty.
pub fn refine_select<R: Rng + ?Sized>(
    fit: &LocalFit,
    c: f64,
    pool_size: usize,
    design: &DesignSet,
    rng: &mut R,
) -> (Vec<f64>, bool) {
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..pool_size {
        let x = fit.region.sample(rng);
        if design.find(&x).is_some() {
            continue;
        }
        let p = fit.predict(&x);
        let u = u_function(&p, c);
        let gap = (p.mu - c).abs();
        let better = match &best {
            None => true,
            Some((bu, bg, _)) => u < *bu || (u == *bu && gap < *bg),
        };
        if better && !u.is_nan() {
            best = Some((u, gap, x));
        }
    }
    match best {
        Some((_, _, x)) => (x, false),
        None => {
            let mut x = fit.region.anchor().to_vec();
            x[0] += 1e-3 * fit.region.radius().max(DUPLICATE_TOL * 1e3);
            (x, true)
        }
    }
}

fn evaluate_into(x: &[f64], design: &mut DesignSet, model: &Model, report: &mut StepReport) -> Result<f64> {
    let g = model.evaluate(x)?;
    design.insert(x, g)?;
    report.true_evals += 1;
    Ok(g)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Candidate,
    Previous,
}

/// Decides whether candidate `v` of a chain currently at `prev` lies in the
/// current intermediate domain, refining the local surrogates as needed and
/// falling back to a true evaluation when the classification is unreliable.
#[allow(clippy::too_many_arguments)]
pub fn classify<F, R>(
    v: &[f64],
    prev: &Sample,
    ctx: &LevelContext,
    factory: &mut F,
    design: &mut DesignSet,
    model: &Model,
    policy: &RefinementPolicy,
    rng: &mut R,
) -> Result<(Membership, StepReport)>
where
    F: SurrogateFactory + ?Sized,
    R: Rng + ?Sized,
{
    let mut report = StepReport::default();
    let beta_t = random_refine_probability(ctx.step, ctx.level, policy);

    let mut fit_v = factory.fit(v, design)?;
    let mut pred_v = fit_v.predict(v);
    let mut eps_v = error_indicator(&pred_v);
    // a truly evaluated state carries no surrogate error; its fit is only
    // needed when a random refinement lands on it
    let mut fit_p: Option<LocalFit> = None;
    let mut eps_p = 0.0;
    if !prev.is_true() {
        let f = factory.fit(&prev.coords, design)?;
        eps_p = error_indicator(&f.predict(&prev.coords));
        fit_p = Some(f);
    }

    while report.refinements < policy.max_refines_per_step {
        let u: f64 = rng.random();
        let (target, c) = if u < beta_t {
            report.random_refinements += 1;
            let t = if rng.random_bool(0.5) { Target::Candidate } else { Target::Previous };
            (t, -ctx.threshold)
        } else if eps_v >= eps_p && eps_v >= policy.gamma_t {
            (Target::Candidate, 0.0)
        } else if eps_p > eps_v && eps_p >= policy.gamma_t {
            (Target::Previous, 0.0)
        } else {
            break;
        };
        let fit = match target {
            Target::Candidate => &fit_v,
            Target::Previous => {
                if fit_p.is_none() {
                    fit_p = Some(factory.fit(&prev.coords, design)?);
                }
                fit_p.as_ref().expect("fitted above")
            }
        };
        let (x, degenerate) = refine_select(fit, c, policy.pool_size, design, rng);
        report.degenerate_pool |= degenerate;
        evaluate_into(&x, design, model, &mut report)?;
        report.refinements += 1;

        fit_v = factory.fit(v, design)?;
        pred_v = fit_v.predict(v);
        eps_v = error_indicator(&pred_v);
        if prev.is_true() {
            fit_p = None;
        } else {
            let f = factory.fit(&prev.coords, design)?;
            eps_p = error_indicator(&f.predict(&prev.coords));
            fit_p = Some(f);
        }
    }

    let c = ctx.threshold;
    let fallback = if eps_v >= policy.gamma_t {
        Some(Fallback::Budget)
    } else if pred_v.lower() < c && c < pred_v.upper() {
        Some(Fallback::Straddle)
    } else if pred_v.mu <= c && pred_v.upper() > ctx.previous + NESTEDNESS_TOL {
        Some(Fallback::Nestedness)
    } else {
        None
    };
    let membership = match fallback {
        Some(_) => {
            let g = evaluate_into(v, design, model, &mut report)?;
            Membership { inside: g <= c, value: g, kind: EvalKind::True }
        }
        None => Membership { inside: pred_v.mu <= c, value: pred_v.mu, kind: EvalKind::Surrogate },
    };
    report.fallback = fallback;
    Ok((membership, report))
}

/// Outcome of the surrogate-assisted start for one level-0 point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartOutcome {
    /// Evaluated with the true model (warm-up or uncertain prediction).
    True,
    /// Stored the surrogate's upper bound.
    Surrogate,
}

/// Level-0 point `index`: the first `warm_up` points (and any point for which
/// the design is still too small to fit) are evaluated truly; afterwards the
/// upper 95% bound of the local surrogate is stored when its error indicator
/// is below `gamma_t`, and the true model is evaluated otherwise.
pub fn local_start<F>(
    v0: Vec<f64>,
    index: usize,
    warm_up: usize,
    factory: &mut F,
    design: &mut DesignSet,
    model: &Model,
    policy: &RefinementPolicy,
) -> Result<(Sample, StartOutcome)>
where
    F: SurrogateFactory + ?Sized,
{
    if index >= warm_up && design.len() >= factory.min_design().max(2) {
        let fit = factory.fit(&v0, design)?;
        let pred = fit.predict(&v0);
        if error_indicator(&pred) < policy.gamma_t {
            return Ok((Sample::with_surrogate(v0, pred.upper()), StartOutcome::Surrogate));
        }
    }
    let g = model.evaluate(&v0)?;
    design.insert(&v0, g)?;
    Ok((Sample::with_true(v0, g), StartOutcome::True))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhs::lhs_sample;
    use crate::limit_state::{LimitState, Linear};
    use crate::local::{GpFactory, PerfectFactory, Region};
    use crate::rng::RngStream;
    use crate::surrogate::{Prediction, Predictor};
    use std::sync::Arc;

    struct Affine {
        slope: f64,
        sigma: f64,
    }

    impl Predictor for Affine {
        fn predict(&self, v: &[f64]) -> Prediction {
            Prediction { mu: self.slope * v[0], sigma: self.sigma }
        }
    }

    /// Fixed pool: cycles through the given points.
    struct PoolFit {
        pool: Vec<f64>,
    }

    #[test]
    fn refine_select_examples() {
        // 1-D linear surrogate, constant sigma, c = 0.3, pool {0, 0.25, 0.5}
        let pred = Affine { slope: 1.0, sigma: 0.1 };
        let pool = PoolFit { pool: vec![0.0, 0.25, 0.5] };
        let best = pool
            .pool
            .iter()
            .copied()
            .min_by(|a, b| {
                u_function(&pred.predict(&[*a]), 0.3).total_cmp(&u_function(&pred.predict(&[*b]), 0.3))
            })
            .unwrap();
        assert_eq!(best, 0.25);

        // through the pool search: a linear surrogate crossing c inside the ball
        let fit = LocalFit {
            predictor: Box::new(Affine { slope: 1.0, sigma: 0.1 }),
            region: Region::Input { center: vec![0.0], radius: 1.0 },
        };
        let mut rng = RngStream::new(1, 1).rng();
        let (x, degenerate) = refine_select(&fit, 0.3, 200, &DesignSet::new(1), &mut rng);
        assert!(!degenerate);
        assert!((x[0] - 0.3).abs() < 0.03, "{x:?}");
    }

    #[test]
    fn refine_select_prefers_zero_u() {
        struct Step;
        impl Predictor for Step {
            fn predict(&self, v: &[f64]) -> Prediction {
                if v[0] > 0.0 {
                    Prediction { mu: 0.7, sigma: 0.0 }
                } else {
                    Prediction { mu: 0.2, sigma: 1.0 }
                }
            }
        }
        let fit = LocalFit { predictor: Box::new(Step), region: Region::Input { center: vec![0.0], radius: 1.0 } };
        let mut rng = RngStream::new(2, 1).rng();
        let (x, _) = refine_select(&fit, 0.7, 50, &DesignSet::new(1), &mut rng);
        assert!(x[0] > 0.0);
    }

    fn g11_setup(n: usize) -> (Model, DesignSet) {
        let g: Arc<dyn LimitState> = Arc::new(Linear::new(2, 4.0));
        let model = Model::new(g.clone());
        let x = lhs_sample(n, 2, RngStream::new(7, 0)).unwrap();
        let mut ds = DesignSet::new(2);
        for i in 0..n {
            let row = [x[(i, 0)], x[(i, 1)]];
            ds.insert(&row, g.value(&row).unwrap()).unwrap();
        }
        (model, ds)
    }

    #[test]
    fn exact_surrogate_costs_nothing() {
        let (model, mut ds) = g11_setup(20);
        let mut f = PerfectFactory { inner: model.inner().clone() };
        let policy = RefinementPolicy { beta1: 0.0, ..Default::default() };
        let ctx = LevelContext { threshold: 2.0, previous: 3.0, level: 1, step: 1 };
        let prev = Sample::with_surrogate(vec![1.5, 1.5], 4.0 - 3.0 / 2f64.sqrt());
        let mut rng = RngStream::new(3, 1).rng();
        let (m, r) = classify(&[1.2, 1.0], &prev, &ctx, &mut f, &mut ds, &model, &policy, &mut rng).unwrap();
        assert_eq!(model.evaluations(), 0);
        assert_eq!(r.true_evals, 0);
        assert_eq!(m.kind, EvalKind::Surrogate);
        assert_eq!(m.value, 4.0 - 2.2 / 2f64.sqrt());
        assert!(!m.inside);
    }

    /// A surrogate whose interval always straddles the threshold.
    struct Vague;
    impl SurrogateFactory for Vague {
        fn min_design(&self) -> usize {
            0
        }
        fn fit(&mut self, center: &[f64], _design: &DesignSet) -> Result<LocalFit> {
            struct P;
            impl Predictor for P {
                fn predict(&self, _v: &[f64]) -> Prediction {
                    Prediction { mu: 2.0, sigma: 0.02 }
                }
            }
            Ok(LocalFit { predictor: Box::new(P), region: Region::Input { center: center.to_vec(), radius: 0.1 } })
        }
    }

    #[test]
    fn straddling_interval_falls_back_to_truth() {
        let (model, mut ds) = g11_setup(10);
        let policy = RefinementPolicy { beta1: 0.0, ..Default::default() };
        // interval [1.96, 2.04] contains c_j = 2.0; error indicator 0.0392 < 0.05
        let ctx = LevelContext { threshold: 2.0, previous: 3.0, level: 1, step: 1 };
        let prev = Sample::with_true(vec![1.5, 1.5], 4.0 - 3.0 / 2f64.sqrt());
        let v = [2.0, 1.5];
        let mut rng = RngStream::new(4, 1).rng();
        let (m, r) = classify(&v, &prev, &ctx, &mut Vague, &mut ds, &model, &policy, &mut rng).unwrap();
        assert_eq!(r.fallback, Some(Fallback::Straddle));
        assert_eq!(r.true_evals, 1);
        assert_eq!(m.kind, EvalKind::True);
        assert_eq!(m.value, 4.0 - 3.5 / 2f64.sqrt());
        assert!(m.inside);
        assert!(ds.contains(&v));
    }

    #[test]
    fn upper_bound_beyond_previous_level_falls_back() {
        let (model, mut ds) = g11_setup(10);
        let policy = RefinementPolicy { beta1: 0.0, ..Default::default() };
        // mu = 2.0 <= c_j = 2.5, but upper 2.04 > c_{j-1} = 2.01
        let ctx = LevelContext { threshold: 2.5, previous: 2.01, level: 2, step: 3 };
        let prev = Sample::with_true(vec![1.5, 1.5], 4.0 - 3.0 / 2f64.sqrt());
        let mut rng = RngStream::new(5, 1).rng();
        let (_, r) = classify(&[2.0, 1.5], &prev, &ctx, &mut Vague, &mut ds, &model, &policy, &mut rng).unwrap();
        assert_eq!(r.fallback, Some(Fallback::Nestedness));
    }

    #[test]
    fn sparse_design_straddle_on_g11() {
        // few far-away points of a curved state give a wide interval around
        // a candidate just inside c_j
        let g: Arc<dyn LimitState> = Arc::new(crate::limit_state::Quadratic::new(2, 2.0, 4.0));
        let model = Model::new(g.clone());
        let mut ds = DesignSet::new(2);
        for p in [[-2.0, -2.0], [-2.0, 0.5], [0.5, -2.0], [-1.0, -1.0], [0.0, -2.5], [-2.5, 0.0], [-1.5, 1.0], [1.0, -1.5], [-3.0, -3.0]] {
            ds.insert(&p, g.value(&p).unwrap()).unwrap();
        }
        let policy = RefinementPolicy { beta1: 0.0, gamma_t: 1e300, ..Default::default() };
        let v = [1.75, 1.75];
        let c = g.value(&v).unwrap() + 0.01;
        let ctx = LevelContext { threshold: c, previous: f64::INFINITY, level: 1, step: 1 };
        let prev = Sample::with_true(vec![2.0, 2.0], g.value(&[2.0, 2.0]).unwrap());
        let mut rng = RngStream::new(6, 1).rng();
        let (m, r) = classify(&v, &prev, &ctx, &mut GpFactory::new(2, false), &mut ds, &model, &policy, &mut rng).unwrap();
        assert_eq!(r.fallback, Some(Fallback::Straddle), "{r:?}");
        assert_eq!(r.refinements, 0);
        assert_eq!(m.kind, EvalKind::True);
        assert_eq!(m.value, g.value(&v).unwrap());
        assert!(m.inside);
    }

    #[test]
    fn gp_classification_agrees_with_truth() {
        // level-1 style check: threshold near the p0-quantile of g11 at d = 2
        let (model, mut ds) = g11_setup(100);
        let g = model.inner().clone();
        let policy = RefinementPolicy::default();
        let mut factory = GpFactory::new(2, false);
        let c1 = 2.7;
        let cands = lhs_sample(100, 2, RngStream::new(8, 0)).unwrap();
        let prev = Sample::with_true(vec![2.0, 2.0], g.value(&[2.0, 2.0]).unwrap());
        let mut rng = RngStream::new(8, 1).rng();
        let mut agree = 0;
        for i in 0..100 {
            let v = [cands[(i, 0)], cands[(i, 1)]];
            let ctx = LevelContext { threshold: c1, previous: f64::INFINITY, level: 1, step: 1 + i % 9 };
            let (m, _) = classify(&v, &prev, &ctx, &mut factory, &mut ds, &model, &policy, &mut rng).unwrap();
            agree += usize::from(m.inside == (g.value(&v).unwrap() <= c1));
        }
        assert!(agree >= 95, "{agree}");
    }

    #[test]
    fn symmetric_roles_of_candidate_and_state() {
        // with both points uncertain, the refinement goes to the larger error
        let (model, mut ds) = g11_setup(12);
        struct Two;
        impl SurrogateFactory for Two {
            fn min_design(&self) -> usize {
                0
            }
            fn fit(&mut self, center: &[f64], _d: &DesignSet) -> Result<LocalFit> {
                struct P(f64);
                impl Predictor for P {
                    fn predict(&self, v: &[f64]) -> Prediction {
                        Prediction { mu: 1.0, sigma: if v[0] > 0.0 { self.0 } else { 0.0 } }
                    }
                }
                let s = if center[0] > 0.0 { 0.2 } else { 0.0 };
                Ok(LocalFit { predictor: Box::new(P(s)), region: Region::Input { center: center.to_vec(), radius: 0.01 } })
            }
        }
        let policy = RefinementPolicy { beta1: 0.0, max_refines_per_step: 1, ..Default::default() };
        let ctx = LevelContext { threshold: 3.0, previous: f64::INFINITY, level: 1, step: 1 };
        let mut rng = RngStream::new(9, 1).rng();
        // uncertain candidate at x > 0: refinement lands next to it
        let prev = Sample::with_surrogate(vec![-1.0, 0.0], 1.0);
        let before = ds.len();
        classify(&[1.0, 0.0], &prev, &ctx, &mut Two, &mut ds, &model, &policy, &mut rng).unwrap();
        let near_v = ds.point(before);
        assert!((near_v[0] - 1.0).abs() <= 0.01);
        // swap roles: the uncertain point is now the chain state
        let prev = Sample::with_surrogate(vec![1.0, 0.0], 1.0);
        let before = ds.len();
        classify(&[-1.0, 0.0], &prev, &ctx, &mut Two, &mut ds, &model, &policy, &mut rng).unwrap();
        let near_p = ds.point(before);
        assert!((near_p[0] - 1.0).abs() <= 0.01);
    }

    #[test]
    fn start_evaluates_warm_up_then_uses_surrogate() {
        let g: Arc<dyn LimitState> = Arc::new(Linear::new(2, 4.0));
        let model = Model::new(g.clone());
        let mut ds = DesignSet::new(2);
        let mut f = PerfectFactory { inner: g };
        let policy = RefinementPolicy::default();
        let x = lhs_sample(50, 2, RngStream::new(10, 0)).unwrap();
        let mut outcomes = Vec::new();
        for i in 0..50 {
            let (s, o) = local_start(vec![x[(i, 0)], x[(i, 1)]], i, 10, &mut f, &mut ds, &model, &policy).unwrap();
            assert_eq!(s.value(), model.inner().value(&s.coords).unwrap());
            outcomes.push(o);
        }
        assert!(outcomes[..10].iter().all(|o| *o == StartOutcome::True));
        assert!(outcomes[10..].iter().all(|o| *o == StartOutcome::Surrogate));
        assert_eq!(model.evaluations(), 10);
    }
}
