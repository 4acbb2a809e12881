//! Subset simulation driver.
//!
//! Level 0 draws `N` Latin-hypercube points; each further level grows
//! `N p0` Markov chains from the smallest working values of the previous
//! population until the quantile threshold reaches the failure domain.
//! In standard mode every candidate is evaluated with the true model; in
//! local modes candidates are classified by local surrogates and the
//! thresholds and final probability are corrected with true evaluations.

pub mod diagnostics;

pub use diagnostics::{chain_autocorrelation, expected_levels, level_cov, total_cov, total_evaluations, CovBound};

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::correction::{
    failure_fraction, fix_final_probability_rel, fix_intermediate_threshold_rel, order_by_value, quantile_midpoint,
    seed_count, CorrectionConfig,
};
use crate::design::DesignSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lhs::lhs_sample;
use crate::limit_state::{BenchmarkSpec, LimitState, Model};
use crate::local::{
    classify, is_high_dim, local_start, Fallback, GpFactory, LevelContext, PlsGpFactory, QuadraticFactory,
    RefinementPolicy, StartOutcome, SurrogateFactory,
};
use crate::mcmc::{adapt, chain_step, ChainStats, Membership, ProposalParams, ADAPT_WINDOW, INITIAL_LAMBDA};
use crate::rng::{tag, RngStream};
use crate::sample::{EvalKind, Sample};

/// Crate version embedded in every result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Standard,
    LocalGp,
    LocalQuadratic,
    LocalPlsGp,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Standard, Mode::LocalGp, Mode::LocalQuadratic, Mode::LocalPlsGp];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::LocalGp => "local-gp",
            Mode::LocalQuadratic => "local-quadratic",
            Mode::LocalPlsGp => "local-pls-gp",
        }
    }

    pub fn is_local(self) -> bool {
        self != Mode::Standard
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (expected standard, local-gp, local-quadratic or local-pls-gp)")))
    }
}

/// Everything that determines one subset-simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkSpec,
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    pub p0: f64,
    pub seed: u64,
    #[serde(default)]
    pub policy: RefinementPolicy,
    #[serde(default)]
    pub correction: CorrectionConfig,
    /// Local design size; defaults from the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    /// Forces the high-dimensional local design size; defaults to `d > 20`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_dim: Option<bool>,
    /// Fraction of `N` evaluated truly before level-0 surrogate use.
    #[serde(default = "default_warm_up")]
    pub warm_up_fraction: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    #[serde(default = "default_lambda")]
    pub initial_lambda: f64,
    /// Chains per proposal-scale adaptation.
    #[serde(default = "default_window")]
    pub adapt_window: usize,
}

fn default_warm_up() -> f64 {
    0.1
}
fn default_max_levels() -> usize {
    20
}
fn default_lambda() -> f64 {
    INITIAL_LAMBDA
}
fn default_window() -> usize {
    ADAPT_WINDOW
}

impl RunConfig {
    pub fn new(benchmark: BenchmarkSpec, mode: Mode, n: usize, p0: f64, seed: u64) -> Self {
        Self {
            benchmark,
            mode,
            n,
            p0,
            seed,
            policy: RefinementPolicy::default(),
            correction: CorrectionConfig::default(),
            n0: None,
            high_dim: None,
            warm_up_fraction: default_warm_up(),
            max_levels: default_max_levels(),
            initial_lambda: default_lambda(),
            adapt_window: default_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Config(format!("p0 must lie in (0, 1), got {}", self.p0)));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("N must be at least 10, got {}", self.n)));
        }
        let np0 = self.n as f64 * self.p0;
        if (np0 - np0.round()).abs() > 1e-9 || np0.round() < 1.0 {
            return Err(Error::Config(format!("N p0 must be a positive integer, got {np0}")));
        }
        let ns = seed_count(self.n, self.p0);
        if ns >= self.n || self.n % ns != 0 {
            return Err(Error::Config(format!("N = {} is not a multiple of N p0 = {ns}", self.n)));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be at least 1".into()));
        }
        if self.adapt_window == 0 {
            return Err(Error::Config("adapt_window must be at least 1".into()));
        }
        if !(self.initial_lambda > 0.0 && self.initial_lambda.is_finite()) {
            return Err(Error::Config("initial_lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warm_up_fraction) {
            return Err(Error::Config("warm_up_fraction must lie in [0, 1]".into()));
        }
        if self.n0 == Some(0) {
            return Err(Error::Config("n0 must be at least 1".into()));
        }
        self.policy.validate()?;
        self.correction.validate()?;
        self.benchmark.validate()
    }

    pub fn seeds(&self) -> usize {
        seed_count(self.n, self.p0)
    }

    /// Surrogate factory for a local mode; `None` in standard mode.
    pub fn factory(&self) -> Option<Box<dyn SurrogateFactory>> {
        let d = self.benchmark.input_dim();
        let high = self.high_dim.unwrap_or_else(|| is_high_dim(d));
        match self.mode {
            Mode::Standard => None,
            Mode::LocalGp => {
                let mut f = GpFactory::new(d, high);
                if let Some(n0) = self.n0 {
                    f.n0 = n0;
                }
                Some(Box::new(f))
            }
            Mode::LocalQuadratic => {
                let mut f = QuadraticFactory::new(d, high);
                if let Some(n0) = self.n0 {
                    f.n0 = n0;
                }
                Some(Box::new(f))
            }
            Mode::LocalPlsGp => {
                let mut f = PlsGpFactory::new(d);
                if let Some(n0) = self.n0 {
                    f.pilot_n0 = n0;
                }
                Some(Box::new(f))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackCounts {
    pub budget: usize,
    pub straddle: usize,
    pub nestedness: usize,
}

impl FallbackCounts {
    fn record(&mut self, f: Option<Fallback>) {
        match f {
            Some(Fallback::Budget) => self.budget += 1,
            Some(Fallback::Straddle) => self.straddle += 1,
            Some(Fallback::Nestedness) => self.nestedness += 1,
            None => {}
        }
    }

    pub fn total(&self) -> usize {
        self.budget + self.straddle + self.nestedness
    }
}

/// One population of the run and the threshold derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    /// Population index, 0 for the Latin-hypercube level.
    pub j: usize,
    /// Threshold defining the next domain; `0` on the final level.
    pub threshold: f64,
    /// Threshold before correction with true evaluations.
    pub threshold_uncorrected: f64,
    /// Whether this population reached the failure domain.
    pub is_final: bool,
    /// Fraction of the population at or below `threshold`.
    pub probability: f64,
    /// Ascending working values of the population.
    pub values: Vec<f64>,
    /// Positions in `values` of the seeds for the next level.
    pub seeds: Vec<usize>,
    /// True evaluations spent on this population, including corrections.
    pub true_evals: u64,
    pub correction_evals: usize,
    /// Working values that are surrogate predictions after correction.
    pub surrogate_values: usize,
    pub refinements: usize,
    pub fallbacks: FallbackCounts,
    pub acceptance: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub version: String,
    pub config: RunConfig,
    pub pf: f64,
    /// Number of populations; `L - 1` intermediate levels.
    pub levels: usize,
    pub thresholds: Vec<f64>,
    pub final_fraction: f64,
    /// True evaluations as counted by the model.
    pub n_total: u64,
    /// True evaluations spent on level 0.
    pub n0: u64,
    /// Evaluations standard subset simulation needs for the same number of levels.
    pub n_total_standard: usize,
    pub surrogate_values: usize,
    pub cov_independent: Option<f64>,
    pub cov_correlated: Option<f64>,
    pub records: Vec<LevelRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
    /// Final population, kept for in-process inspection.
    #[serde(skip)]
    pub final_population: Vec<Sample>,
}

/// Runs one configuration, building its benchmark first.
pub fn run(config: &RunConfig, exec: Execution) -> Result<RunResult> {
    config.validate()?;
    let g = config.benchmark.build()?;
    run_with(config, g, exec)
}

/// Runs one configuration against an already built limit state.
pub fn run_with(config: &RunConfig, g: Arc<dyn LimitState>, exec: Execution) -> Result<RunResult> {
    config.validate()?;
    match config.factory() {
        None => drive(config, Model::new(g), Driver::Standard, exec),
        Some(mut f) => drive(config, Model::new(g), Driver::Local(f.as_mut()), exec),
    }
}

/// Local-mode run with a caller-supplied surrogate factory.
pub fn run_local_with(
    config: &RunConfig,
    g: Arc<dyn LimitState>,
    factory: &mut dyn SurrogateFactory,
) -> Result<RunResult> {
    config.validate()?;
    drive(config, Model::new(g), Driver::Local(factory), Execution::Sequential)
}

/// Runs independent configurations, in parallel under `exec`. The limit
/// state of each distinct benchmark is built once and shared.
pub fn run_many(configs: &[RunConfig], exec: Execution) -> Vec<Result<RunResult>> {
    let mut built: Vec<(BenchmarkSpec, Result<Arc<dyn LimitState>>)> = Vec::new();
    for c in configs {
        if !built.iter().any(|(b, _)| *b == c.benchmark) {
            built.push((c.benchmark.clone(), c.benchmark.build()));
        }
    }
    exec.map(configs, |c| {
        let (_, g) = built.iter().find(|(b, _)| *b == c.benchmark).expect("built above");
        match g {
            Ok(g) => run_with(c, g.clone(), Execution::Sequential),
            Err(e) => Err(Error::Config(e.to_string())),
        }
    })
}

enum Driver<'a> {
    Standard,
    Local(&'a mut dyn SurrogateFactory),
}

/// Per-dimension sample standard deviation of the seeds; falls back to 1
/// where it is degenerate.
fn seed_spread(seeds: &[Sample], d: usize) -> Vec<f64> {
    let n = seeds.len();
    (0..d)
        .map(|k| {
            if n < 2 {
                return 1.0;
            }
            let mean = seeds.iter().map(|s| s.coords[k]).sum::<f64>() / n as f64;
            let var = seeds.iter().map(|s| (s.coords[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if sd < 1e-8 {
                1.0
            } else {
                sd
            }
        })
        .collect()
}

struct ChainOutput {
    states: Vec<Sample>,
    stats: ChainStats,
    refinements: usize,
    fallbacks: FallbackCounts,
}

fn drive(config: &RunConfig, model: Model, mut driver: Driver<'_>, exec: Execution) -> Result<RunResult> {
    let start = Instant::now();
    let n = config.n;
    let p0 = config.p0;
    let ns = config.seeds();
    let steps = n / ns - 1;
    let d = config.benchmark.input_dim();
    let root = RngStream::new(config.seed, 0);
    let mut design = DesignSet::new(d);

    // level 0
    let x = lhs_sample(n, d, root.child(tag::LHS))?;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut population: Vec<Sample> = match &mut driver {
        Driver::Standard => exec
            .map(&rows, |r| model.evaluate(r).map(|g| Sample::with_true(r.clone(), g)))
            .into_iter()
            .collect::<Result<_>>()?,
        Driver::Local(factory) => {
            let warm_up = ((config.warm_up_fraction * n as f64).ceil() as usize).max(factory.min_design());
            let mut out = Vec::with_capacity(n);
            for (i, r) in rows.into_iter().enumerate() {
                let (s, _): (Sample, StartOutcome) =
                    local_start(r, i, warm_up, &mut **factory, &mut design, &model, &config.policy)?;
                out.push(s);
            }
            out
        }
    };

    let mut records: Vec<LevelRecord> = Vec::new();
    let mut previous = f64::INFINITY;
    let mut evals_before = 0u64;
    // chain bookkeeping of the current population: (acceptance, lambda, refinements, fallbacks)
    let mut chain_info: Option<(f64, f64, usize, FallbackCounts)> = None;

    loop {
        let j = records.len();
        let mut correction_evals = 0;
        let uncorrected = {
            let order = order_by_value(&population);
            let sorted: Vec<f64> = order.iter().map(|&i| population[i].value()).collect();
            quantile_midpoint(&sorted, p0)
        };
        let mut threshold = uncorrected;
        if let Driver::Local(_) = driver {
            if uncorrected > 0.0 {
                let c = fix_intermediate_threshold_rel(&mut population, p0, &config.correction, &model, &mut design)?;
                threshold = c.value;
                correction_evals += c.evaluations;
            }
        }
        let is_final = threshold <= 0.0;
        let probability = if is_final {
            if let Driver::Local(_) = driver {
                let c = fix_final_probability_rel(&mut population, &config.correction, &model, &mut design)?;
                correction_evals += c.evaluations;
            }
            failure_fraction(&population)
        } else {
            population.iter().filter(|s| s.value() <= threshold).count() as f64 / n as f64
        };
        let level_threshold = if is_final { 0.0 } else { threshold };

        // chain correlation of this population (chain-major layout)
        let gamma = if j == 0 {
            0.0
        } else {
            let chains: Vec<Vec<u8>> = population
                .chunks(steps + 1)
                .map(|c| c.iter().map(|s| u8::from(s.value() <= level_threshold)).collect())
                .collect();
            chain_autocorrelation(&chains, probability).0
        };
        let delta = level_cov(probability, n, gamma);

        let order = order_by_value(&population);
        population = order.iter().map(|&i| population[i].clone()).collect();
        let evals_now = model.evaluations();
        let (acceptance, chain_lambda, refinements, fallbacks) = match chain_info.take() {
            Some((a, l, r, f)) => (Some(a), Some(l), r, f),
            None => (None, None, 0, FallbackCounts::default()),
        };
        records.push(LevelRecord {
            j,
            threshold: level_threshold,
            threshold_uncorrected: uncorrected,
            is_final,
            probability,
            values: population.iter().map(Sample::value).collect(),
            seeds: if is_final { Vec::new() } else { (0..ns).collect() },
            true_evals: evals_now - evals_before,
            correction_evals,
            surrogate_values: population.iter().filter(|s| s.kind == EvalKind::Surrogate).count(),
            refinements,
            fallbacks,
            acceptance,
            lambda: chain_lambda,
            gamma,
            delta,
        });
        evals_before = evals_now;
        if is_final {
            break;
        }
        if j >= 1 && threshold >= previous {
            return Err(Error::Stagnation { level: j, current: previous, next: threshold });
        }
        if j + 1 >= config.max_levels {
            return Err(Error::MaxLevels { max_levels: config.max_levels, last_threshold: threshold });
        }

        // grow the next population from the seeds
        let level = j + 1;
        // chains run in random seed order so the adapted proposal scale does
        // not depend on a seed's rank
        let mut seeds: Vec<Sample> = population[..ns].to_vec();
        seeds.shuffle(&mut root.child(tag::MISC).child2(level as u64, 0).rng());
        // the proposal scale restarts at its initial value on every level
        let mut params = ProposalParams::new(seed_spread(&seeds, d), config.initial_lambda);
        let mut outputs: Vec<ChainOutput> = Vec::with_capacity(ns);
        let mut level_stats = ChainStats::default();
        let mut adaptation = 1;
        if let Driver::Local(factory) = &mut driver {
            factory.begin_level(&design)?;
        }
        for window in (0..ns).collect::<Vec<_>>().chunks(config.adapt_window) {
            let results: Vec<ChainOutput> = match &mut driver {
                Driver::Standard => exec
                    .map(window, |&k| {
                        standard_chain(&seeds[k], &params, steps, threshold, &model, root.child(tag::CHAIN).child2(level as u64, k as u64))
                    })
                    .into_iter()
                    .collect::<Result<_>>()?,
                Driver::Local(factory) => {
                    let mut out = Vec::with_capacity(window.len());
                    for &k in window {
                        let ctx = LocalChain {
                            threshold,
                            previous,
                            level,
                            steps,
                            chain_rng: root.child(tag::CHAIN).child2(level as u64, k as u64),
                            controller_rng: root.child(tag::CONTROLLER).child2(level as u64, k as u64),
                        };
                        out.push(local_chain(&seeds[k], &params, &ctx, &mut **factory, &mut design, &model, &config.policy)?);
                    }
                    out
                }
            };
            let mut window_stats = ChainStats::default();
            for r in &results {
                window_stats.merge(r.stats);
            }
            level_stats.merge(window_stats);
            params = adapt(&params, &window_stats, adaptation);
            adaptation += 1;
            outputs.extend(results);
        }
        let mut refinements = 0;
        let mut fallbacks = FallbackCounts::default();
        let mut next = Vec::with_capacity(n);
        for (seed, out) in seeds.into_iter().zip(outputs) {
            refinements += out.refinements;
            fallbacks.budget += out.fallbacks.budget;
            fallbacks.straddle += out.fallbacks.straddle;
            fallbacks.nestedness += out.fallbacks.nestedness;
            next.push(seed);
            next.extend(out.states);
        }
        chain_info = Some((level_stats.rate(), params.lambda, refinements, fallbacks));
        previous = threshold;
        population = next;
    }

    let levels = records.len();
    let final_fraction = records.last().expect("at least one level").probability;
    let pf = p0.powi(levels as i32 - 1) * final_fraction;
    let deltas: Option<Vec<f64>> = records.iter().map(|r| r.delta).collect();
    Ok(RunResult {
        version: VERSION.to_string(),
        config: config.clone(),
        pf,
        levels,
        thresholds: records.iter().map(|r| r.threshold).collect(),
        final_fraction,
        n_total: model.evaluations(),
        n0: records[0].true_evals,
        n_total_standard: total_evaluations(n, p0, levels),
        surrogate_values: records.iter().map(|r| r.surrogate_values).sum(),
        cov_independent: deltas.as_ref().map(|d| total_cov(d, CovBound::Independent)),
        cov_correlated: deltas.as_ref().map(|d| total_cov(d, CovBound::Correlated)),
        records,
        wall_time: start.elapsed(),
        final_population: population,
    })
}

fn standard_chain(
    seed: &Sample,
    params: &ProposalParams,
    steps: usize,
    threshold: f64,
    model: &Model,
    stream: RngStream,
) -> Result<ChainOutput> {
    let mut rng = stream.rng();
    let mut current = seed.clone();
    let mut stats = ChainStats::default();
    let mut states = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, accepted) = chain_step(&current, params, &mut rng, |v| {
            let g = model.evaluate(v)?;
            Ok(Membership { inside: g <= threshold, value: g, kind: EvalKind::True })
        })?;
        stats.record(accepted);
        states.push(next.clone());
        current = next;
    }
    Ok(ChainOutput { states, stats, refinements: 0, fallbacks: FallbackCounts::default() })
}

struct LocalChain {
    threshold: f64,
    previous: f64,
    level: usize,
    steps: usize,
    chain_rng: RngStream,
    controller_rng: RngStream,
}

fn local_chain(
    seed: &Sample,
    params: &ProposalParams,
    chain: &LocalChain,
    factory: &mut dyn SurrogateFactory,
    design: &mut DesignSet,
    model: &Model,
    policy: &RefinementPolicy,
) -> Result<ChainOutput> {
    let mut rng = chain.chain_rng.rng();
    let mut ctl = chain.controller_rng.rng();
    let mut current = seed.clone();
    let mut stats = ChainStats::default();
    let mut refinements = 0;
    let mut fallbacks = FallbackCounts::default();
    let mut states = Vec::with_capacity(chain.steps);
    for s in 1..=chain.steps {
        let ctx = LevelContext { threshold: chain.threshold, previous: chain.previous, level: chain.level, step: s };
        let (next, accepted) = chain_step(&current, params, &mut rng, |v| {
            let (m, report) = classify(v, &current, &ctx, factory, design, model, policy, &mut ctl)?;
            refinements += report.refinements;
            fallbacks.record(report.fallback);
            Ok(m)
        })?;
        stats.record(accepted);
        states.push(next.clone());
        current = next;
    }
    Ok(ChainOutput { states, stats, refinements, fallbacks })
}
