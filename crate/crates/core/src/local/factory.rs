//! Surrogate factories: fit a local model around a query point from the
//! current design set, together with the region refinement points are
//! drawn from.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{default_n0, select_ball};
use crate::design::DesignSet;
use crate::error::Result;
use crate::limit_state::LimitState;
use crate::pls::{fit_local_pls_gp_cached, pls1_fit_default, PlsModel};
use crate::surrogate::{GpConfig, GpModel, Prediction, Predictor, QuadraticModel};

/// Where refinement candidates are drawn.
#[derive(Debug, Clone)]
pub enum Region {
    /// Euclidean ball in input space.
    Input { center: Vec<f64>, radius: f64 },
    /// Euclidean ball in a PLS latent space, lifted back to input space
    /// along the loadings from `anchor`.
    Latent { pls: PlsModel, anchor: Vec<f64>, center: Vec<f64>, radius: f64 },
}

/// Uniform draw in the `m`-dimensional ball of radius `radius` around `center`.
fn uniform_in_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let m = center.len();
    let dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / m as f64);
    center.iter().zip(&dir).map(|(c, z)| c + r * z / norm).collect()
}

impl Region {
    pub fn radius(&self) -> f64 {
        match self {
            Region::Input { radius, .. } | Region::Latent { radius, .. } => *radius,
        }
    }

    /// Uniform point of the region, in input space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Region::Input { center, radius } => uniform_in_ball(center, *radius, rng),
            Region::Latent { pls, anchor, center, radius } => pls.lift(anchor, &uniform_in_ball(center, *radius, rng)),
        }
    }

    /// Query point the region is centred on, in input space.
    pub fn anchor(&self) -> &[f64] {
        match self {
            Region::Input { center, .. } => center,
            Region::Latent { anchor, .. } => anchor,
        }
    }
}

/// A fitted local surrogate and its refinement region.
pub struct LocalFit {
    pub predictor: Box<dyn Predictor>,
    pub region: Region,
}

impl LocalFit {
    pub fn predict(&self, v: &[f64]) -> Prediction {
        self.predictor.predict(v)
    }
}

impl std::fmt::Debug for LocalFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalFit").field("region", &self.region).finish_non_exhaustive()
    }
}

pub trait SurrogateFactory: Send {
    /// Smallest design size at which [`SurrogateFactory::fit`] works.
    fn min_design(&self) -> usize;

    /// Called once before the chains of each level start.
    fn begin_level(&mut self, _design: &DesignSet) -> Result<()> {
        Ok(())
    }

    fn fit(&mut self, center: &[f64], design: &DesignSet) -> Result<LocalFit>;
}

fn ball_data(design: &DesignSet, members: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let x = DMatrix::from_fn(members.len(), design.dim(), |i, j| design.point(members[i])[j]);
    let y = members.iter().map(|&i| design.value(i)).collect();
    (x, y)
}

/// Gaussian process on the `n0` nearest design points.
#[derive(Debug, Clone)]
pub struct GpFactory {
    pub n0: usize,
    pub gp: GpConfig,
}

impl GpFactory {
    pub fn new(d: usize, high_dim: bool) -> Self {
        Self { n0: default_n0(d, high_dim), gp: GpConfig::default() }
    }
}

impl SurrogateFactory for GpFactory {
    fn min_design(&self) -> usize {
        self.n0
    }

    fn fit(&mut self, center: &[f64], design: &DesignSet) -> Result<LocalFit> {
        let ball = select_ball(center, design, self.n0)?;
        let (x, y) = ball_data(design, &ball.members);
        let gp = GpModel::fit(&x, &y, &self.gp)?;
        Ok(LocalFit { predictor: Box::new(gp), region: Region::Input { center: ball.center, radius: ball.radius } })
    }
}

/// Quadratic regression on the `n0` nearest design points.
#[derive(Debug, Clone)]
pub struct QuadraticFactory {
    pub n0: usize,
}

impl QuadraticFactory {
    pub fn new(d: usize, high_dim: bool) -> Self {
        Self { n0: default_n0(d, high_dim) }
    }
}

impl SurrogateFactory for QuadraticFactory {
    fn min_design(&self) -> usize {
        self.n0
    }

    fn fit(&mut self, center: &[f64], design: &DesignSet) -> Result<LocalFit> {
        let ball = select_ball(center, design, self.n0)?;
        let (x, y) = ball_data(design, &ball.members);
        let q = QuadraticModel::fit(&x, &y)?;
        Ok(LocalFit { predictor: Box::new(q), region: Region::Input { center: ball.center, radius: ball.radius } })
    }
}

/// Two-stage PLS + GP. The global PLS subspace is fitted on the whole
/// design at each level start and refitted when the design has grown by
/// more than `refresh_growth` since.
#[derive(Debug, Clone)]
pub struct PlsGpFactory {
    pub pilot_n0: usize,
    pub gp: GpConfig,
    pub refresh_growth: f64,
    global: Option<PlsModel>,
    global_size: usize,
    /// Global latent coordinates of the design points seen so far.
    latent: Vec<Vec<f64>>,
}

impl PlsGpFactory {
    pub fn new(d: usize) -> Self {
        Self { pilot_n0: d + 1, gp: GpConfig::default(), refresh_growth: 0.1, global: None, global_size: 0, latent: Vec::new() }
    }

    fn refresh(&mut self, design: &DesignSet) -> Result<()> {
        let x = DMatrix::from_fn(design.len(), design.dim(), |i, j| design.point(i)[j]);
        let global = pls1_fit_default(&x, design.values())?;
        self.latent = design.points().iter().map(|p| global.project_point(p)).collect();
        self.global = Some(global);
        self.global_size = design.len();
        Ok(())
    }

    pub fn global(&self) -> Option<&PlsModel> {
        self.global.as_ref()
    }
}

impl SurrogateFactory for PlsGpFactory {
    fn min_design(&self) -> usize {
        self.pilot_n0
    }

    fn begin_level(&mut self, design: &DesignSet) -> Result<()> {
        self.refresh(design)
    }

    fn fit(&mut self, center: &[f64], design: &DesignSet) -> Result<LocalFit> {
        let stale = self.global.is_none()
            || design.len() as f64 > self.global_size as f64 * (1.0 + self.refresh_growth);
        if stale {
            self.refresh(design)?;
        }
        let global = self.global.as_ref().expect("global subspace fitted above");
        // the design only grows, so new points are appended
        for i in self.latent.len()..design.len() {
            self.latent.push(global.project_point(design.point(i)));
        }
        let m = fit_local_pls_gp_cached(design, global, &self.latent, center, self.pilot_n0, &self.gp)?;
        let region = Region::Latent {
            pls: m.pls.clone(),
            anchor: center.to_vec(),
            center: m.center.clone(),
            radius: m.radius,
        };
        Ok(LocalFit { predictor: Box::new(m), region })
    }
}

/// Exact "surrogate": the limit state itself with zero variance, queried
/// without touching the evaluation counter. For equivalence tests.
#[derive(Clone)]
pub struct PerfectFactory {
    pub inner: Arc<dyn LimitState>,
}

struct Exact(Arc<dyn LimitState>);

impl Predictor for Exact {
    fn predict(&self, v: &[f64]) -> Prediction {
        Prediction { mu: self.0.value(v).unwrap_or(f64::NAN), sigma: 0.0 }
    }
}

impl SurrogateFactory for PerfectFactory {
    fn min_design(&self) -> usize {
        0
    }

    fn fit(&mut self, center: &[f64], _design: &DesignSet) -> Result<LocalFit> {
        Ok(LocalFit {
            predictor: Box::new(Exact(self.inner.clone())),
            region: Region::Input { center: center.to_vec(), radius: 1.0 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhs::lhs_sample;
    use crate::limit_state::Linear;
    use crate::rng::RngStream;
    use crate::sample::dist;

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = RngStream::new(1, 1).rng();
        let r = Region::Input { center: vec![1.0, -2.0, 0.5], radius: 0.3 };
        let mut far = 0.0f64;
        for _ in 0..2000 {
            let x = r.sample(&mut rng);
            far = far.max(dist(&x, &[1.0, -2.0, 0.5]));
        }
        assert!(far <= 0.3 && far > 0.28);
    }

    #[test]
    fn ball_samples_are_uniform_in_radius() {
        // P(|x - c| <= R/2) = 2^-d for a uniform draw in a d-ball
        let mut rng = RngStream::new(2, 1).rng();
        let r = Region::Input { center: vec![0.0; 2], radius: 1.0 };
        let inner = (0..40_000).filter(|_| dist(&r.sample(&mut rng), &[0.0, 0.0]) <= 0.5).count();
        assert!((inner as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }

    fn design(n: usize, d: usize) -> DesignSet {
        let g = Linear::new(d, 4.0);
        let x = lhs_sample(n, d, RngStream::new(5, 0)).unwrap();
        let mut ds = DesignSet::new(d);
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            ds.insert(&row, g.value(&row).unwrap()).unwrap();
        }
        ds
    }

    #[test]
    fn gp_factory_predicts_linear_state() {
        let ds = design(60, 2);
        let mut f = GpFactory::new(2, false);
        let fit = f.fit(&[0.2, 0.1], &ds).unwrap();
        let p = fit.predict(&[0.2, 0.1]);
        assert!((p.mu - (4.0 - 0.3 / 2f64.sqrt())).abs() < 1e-3);
        assert!(fit.region.radius() > 0.0);
    }

    #[test]
    fn pls_factory_samples_lift_into_input_space() {
        let d = 30;
        let ds = design(200, d);
        let mut f = PlsGpFactory::new(d);
        f.begin_level(&ds).unwrap();
        let v = vec![0.1; d];
        let fit = f.fit(&v, &ds).unwrap();
        let mut rng = RngStream::new(3, 1).rng();
        let x = fit.region.sample(&mut rng);
        assert_eq!(x.len(), d);
        let g = Linear::new(d, 4.0);
        let p = fit.predict(&v);
        assert!((p.mu - g.value(&v).unwrap()).abs() < 0.05 * g.value(&v).unwrap());
    }

    #[test]
    fn pls_factory_refreshes_after_growth() {
        let d = 25;
        let mut ds = design(100, d);
        let mut f = PlsGpFactory::new(d);
        f.begin_level(&ds).unwrap();
        let before = f.global_size;
        let g = Linear::new(d, 4.0);
        let extra = lhs_sample(20, d, RngStream::new(9, 0)).unwrap();
        for i in 0..20 {
            let row: Vec<f64> = extra.row(i).iter().copied().collect();
            ds.insert(&row, g.value(&row).unwrap()).unwrap();
        }
        f.fit(&vec![0.0; d], &ds).unwrap();
        assert_eq!(before, 100);
        assert_eq!(f.global_size, 120);
    }

    #[test]
    fn perfect_factory_is_exact() {
        let g: Arc<dyn LimitState> = Arc::new(Linear::new(2, 4.0));
        let mut f = PerfectFactory { inner: g };
        let fit = f.fit(&[1.0, 1.0], &DesignSet::new(2)).unwrap();
        let p = fit.predict(&[1.0, 1.0]);
        assert_eq!(p.sigma, 0.0);
        assert_eq!(p.mu, 4.0 - 2.0 / 2f64.sqrt());
    }
}
