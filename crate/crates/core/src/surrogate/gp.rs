//! Gaussian-process regression with a constant trend and an anisotropic
//! squared-exponential kernel.
//!
//! Trend coefficient and process variance come from generalized least
//! squares; length-scales maximize the concentrated log-likelihood
//!
//! ```text
//! l(chi) = -n/2 ln sigma_g^2(chi) - 1/2 ln |K(chi)|
//! ```
//!
//! Inputs are standardized per dimension before fitting.

use nalgebra::{DMatrix, DVector};

use super::optimize::nelder_mead_box;
use super::{Prediction, Predictor};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Chol};

/// `exp(-1/2 sum_k ((x1_k - x2_k) / l_k)^2)`.
pub fn kernel(x1: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    let s: f64 = x1
        .iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum();
    (-0.5 * s).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    /// Diagonal jitter relative to `trace(K) / n`.
    pub nugget: f64,
    pub max_nugget: f64,
    pub n_starts: usize,
    /// Likelihood evaluations per fit, starts included.
    pub max_evals: usize,
    /// Length-scale box is `[span / bound_factor, span * bound_factor]`.
    pub bound_factor: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self { nugget: 1e-10, max_nugget: 1e-4, n_starts: 5, max_evals: 200, bound_factor: 1e2 }
    }
}

#[derive(Debug, Clone)]
struct Standardizer {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut center = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            center.push(m);
            scale.push(if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 1.0 });
        }
        Self { center, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).zip(&self.scale).map(|((v, c), s)| (v - c) / s).collect()
    }
}

/// Fitted local Gaussian process. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    std: Standardizer,
    /// Training inputs, standardized, one row per point.
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
    beta: f64,
    sigma2: f64,
    /// Length-scales in standardized units.
    ls: Vec<f64>,
    chol: Option<Chol>,
    alpha: DVector<f64>,
    kinv_one: DVector<f64>,
    one_kinv_one: f64,
    nugget: f64,
    constant: bool,
}

struct Gls {
    chol: Chol,
    nugget: f64,
    beta: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    kinv_one: DVector<f64>,
    one_kinv_one: f64,
    log_det: f64,
}

fn kernel_matrix(x: &[Vec<f64>], ls: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = kernel(&x[i], &x[j], ls);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn gls(x: &[Vec<f64>], y: &DVector<f64>, ls: &[f64], nugget: f64, max_nugget: f64) -> Result<Gls> {
    let n = x.len();
    let k = kernel_matrix(x, ls);
    let base = nugget * k.trace() / n as f64;
    let (chol, used) = cholesky_with_jitter(&k, base, max_nugget.max(base))?;
    let ones = DVector::from_element(n, 1.0);
    let kinv_one = chol.solve(&ones);
    let one_kinv_one = ones.dot(&kinv_one);
    let kinv_y = chol.solve(y);
    let beta = ones.dot(&kinv_y) / one_kinv_one;
    let resid = y - DVector::from_element(n, beta);
    let alpha = chol.solve(&resid);
    let sigma2 = resid.dot(&alpha) / n as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Gls { chol, nugget: used, beta, sigma2, alpha, kinv_one, one_kinv_one, log_det })
}

fn concentrated_ll(g: &Gls, n: usize) -> f64 {
    -0.5 * n as f64 * g.sigma2.max(1e-300).ln() - 0.5 * g.log_det
}

impl GpModel {
    /// Fits length-scales by maximum likelihood, then the GLS trend and variance.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &GpConfig) -> Result<Self> {
        let (std, xs, yv) = Self::prepare(x, y)?;
        if let Some(m) = Self::constant_model(&std, &xs, &yv) {
            return Ok(m);
        }
        let (lo, hi) = Self::log_bounds(&xs, cfg.bound_factor);
        let p = lo.len();
        let n = xs.len();
        let mut nll = |t: &[f64]| -> f64 {
            let ls: Vec<f64> = t.iter().map(|v| v.exp()).collect();
            match gls(&xs, &yv, &ls, cfg.nugget, cfg.nugget) {
                Ok(g) => -concentrated_ll(&g, n),
                Err(_) => f64::INFINITY,
            }
        };
        // deterministic isotropic starting points spread along the box diagonal
        let k = cfg.n_starts.max(1);
        let starts: Vec<Vec<f64>> = (0..k)
            .map(|s| {
                let f = if k == 1 { 0.5 } else { 0.1 + 0.8 * s as f64 / (k - 1) as f64 };
                (0..p).map(|i| lo[i] + f * (hi[i] - lo[i])).collect()
            })
            .collect();
        let mut scored: Vec<(Vec<f64>, f64)> = starts.into_iter().map(|s| {
            let v = nll(&s);
            (s, v)
        }).collect();
        let used = scored.len();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        // Nelder–Mead from the best start, restarted from the incumbent with a
        // fresh simplex while budget remains
        let mut budget = cfg.max_evals.saturating_sub(used);
        let (mut t, mut t_val) = scored.swap_remove(0);
        while budget > p {
            let (x, v, spent) = nelder_mead_box(&mut nll, &t, &lo, &hi, budget);
            budget = budget.saturating_sub(spent);
            let improved = v < t_val - 1e-10 * (1.0 + t_val.abs());
            if v <= t_val {
                t = x;
                t_val = v;
            }
            if !improved {
                break;
            }
        }
        let ls: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        Self::assemble(std, xs, yv, ls, cfg)
    }

    /// Fits with fixed length-scales given in the original input units.
    pub fn fit_fixed(x: &DMatrix<f64>, y: &[f64], lengthscales: &[f64], cfg: &GpConfig) -> Result<Self> {
        let (std, xs, yv) = Self::prepare(x, y)?;
        if lengthscales.len() != x.ncols() {
            return Err(Error::Dimension { expected: x.ncols(), got: lengthscales.len() });
        }
        if let Some(m) = Self::constant_model(&std, &xs, &yv) {
            return Ok(m);
        }
        let ls = lengthscales.iter().zip(&std.scale).map(|(l, s)| l / s).collect();
        Self::assemble(std, xs, yv, ls, cfg)
    }

    fn prepare(x: &DMatrix<f64>, y: &[f64]) -> Result<(Standardizer, Vec<Vec<f64>>, DVector<f64>)> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
        }
        if x.nrows() < 2 {
            return Err(Error::Domain(format!("a GP needs at least 2 points, got {}", x.nrows())));
        }
        let std = Standardizer::fit(x);
        let xs = (0..x.nrows())
            .map(|i| std.apply(x.row(i).transpose().as_slice()))
            .collect();
        Ok((std, xs, DVector::from_column_slice(y)))
    }

    fn constant_model(std: &Standardizer, xs: &[Vec<f64>], y: &DVector<f64>) -> Option<Self> {
        let (lo, hi) = (y.min(), y.max());
        if hi - lo > 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            return None;
        }
        let n = y.len();
        Some(Self {
            std: std.clone(),
            x: xs.to_vec(),
            y: y.clone(),
            beta: y[0],
            sigma2: 0.0,
            ls: vec![1.0; std.center.len()],
            chol: None,
            alpha: DVector::zeros(n),
            kinv_one: DVector::zeros(n),
            one_kinv_one: 1.0,
            nugget: 0.0,
            constant: true,
        })
    }

    fn log_bounds(xs: &[Vec<f64>], factor: f64) -> (Vec<f64>, Vec<f64>) {
        let p = xs[0].len();
        let mut lo = Vec::with_capacity(p);
        let mut hi = Vec::with_capacity(p);
        for j in 0..p {
            let (mn, mx) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
            let span = if mx - mn > 1e-12 { mx - mn } else { 1.0 };
            lo.push((span / factor).ln());
            hi.push((span * factor).ln());
        }
        (lo, hi)
    }

    fn assemble(std: Standardizer, xs: Vec<Vec<f64>>, y: DVector<f64>, ls: Vec<f64>, cfg: &GpConfig) -> Result<Self> {
        let g = gls(&xs, &y, &ls, cfg.nugget, cfg.max_nugget)?;
        Ok(Self {
            std,
            x: xs,
            y,
            beta: g.beta,
            sigma2: g.sigma2.max(0.0),
            ls,
            chol: Some(g.chol),
            alpha: g.alpha,
            kinv_one: g.kinv_one,
            one_kinv_one: g.one_kinv_one,
            nugget: g.nugget,
            constant: false,
        })
    }

    pub fn n_points(&self) -> usize {
        self.x.len()
    }

    pub fn trend(&self) -> f64 {
        self.beta
    }

    pub fn sigma_g2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Length-scales in the original input units.
    pub fn lengthscales(&self) -> Vec<f64> {
        self.ls.iter().zip(&self.std.scale).map(|(l, s)| l * s).collect()
    }

    /// Concentrated log-likelihood at the given length-scales (original units),
    /// on this model's training data.
    pub fn log_likelihood_at(&self, lengthscales: &[f64], cfg: &GpConfig) -> f64 {
        let ls: Vec<f64> = lengthscales.iter().zip(&self.std.scale).map(|(l, s)| l / s).collect();
        match gls(&self.x, &self.y, &ls, cfg.nugget, cfg.nugget) {
            Ok(g) => concentrated_ll(&g, self.x.len()),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn log_likelihood(&self, cfg: &GpConfig) -> f64 {
        self.log_likelihood_at(&self.lengthscales(), cfg)
    }

    /// Mean and unclamped variance at `v`.
    pub fn predict_raw(&self, v: &[f64]) -> (f64, f64) {
        let Some(chol) = &self.chol else {
            return (self.beta, 0.0);
        };
        let xs = self.std.apply(v);
        let rho = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(&xs, xi, &self.ls)));
        let mu = self.beta + rho.dot(&self.alpha);
        let kinv_rho = chol.solve(&rho);
        let u = 1.0 - self.kinv_one.dot(&rho);
        let var = self.sigma2 * (1.0 - rho.dot(&kinv_rho) + u * u / self.one_kinv_one);
        (mu, var)
    }
}

impl Predictor for GpModel {
    fn predict(&self, v: &[f64]) -> Prediction {
        let (mu, var) = self.predict_raw(v);
        Prediction { mu, sigma: var.max(0.0).sqrt() }
    }
}
