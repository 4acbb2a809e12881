//! Single-response partial least squares (PLS1) and the two-stage
//! global-then-local PLS + GP surrogate used in high dimensions.
//!
//! The first weight vector `w1 = X^T Y / ||X^T Y||` maximizes the squared
//! covariance between the projected inputs and the response; later
//! components are extracted from deflated data. Inputs map to latent
//! coordinates through `R = W (P^T W)^-1`, and since `R^T P = I` a latent
//! displacement `dh` maps back to the input displacement `P dh`.

use nalgebra::{DMatrix, DVector};

use crate::design::{nearest_by, DesignSet};
use crate::error::{Error, Result};
use crate::sample::sq_dist;
use crate::surrogate::{GpConfig, GpModel, Prediction, Predictor};

/// Relative residual tolerance `eps_y / ||Y_centered||`.
pub const DEFAULT_EPS_REL: f64 = 1e-3;
/// Upper bound on the number of latent components.
pub const DEFAULT_R_CAP: usize = 10;

#[derive(Debug, Clone)]
pub struct PlsModel {
    pub mu_x: DVector<f64>,
    pub mu_y: f64,
    /// `d x r` weights, unit-norm columns.
    pub w: DMatrix<f64>,
    /// `d x r` loadings.
    pub p: DMatrix<f64>,
    /// Inner regression coefficients.
    pub b: DVector<f64>,
    /// `d x r` rotation `W (P^T W)^-1`.
    pub r_pls: DMatrix<f64>,
    /// `n x r` training scores accumulated during the fit.
    pub scores: DMatrix<f64>,
    /// Norm of the deflated response after each component.
    pub residual_norms: Vec<f64>,
    /// Set when extraction stopped because the covariance `X^T Y` vanished
    /// before the residual tolerance was met.
    pub exhausted: bool,
}

/// Default stopping rule for `n` training points: `(eps_y, r_max)`.
pub fn default_stopping(y: &[f64]) -> (f64, usize) {
    let n = y.len();
    let m = y.iter().sum::<f64>() / n as f64;
    let norm = y.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt();
    (DEFAULT_EPS_REL * norm, n.saturating_sub(1).clamp(1, DEFAULT_R_CAP))
}

/// Fits PLS1 on the rows of `x` against `y`, stopping once the deflated
/// response norm is at most `eps_y` or `r_max` components were extracted.
pub fn pls1_fit(x: &DMatrix<f64>, y: &[f64], eps_y: f64, r_max: usize) -> Result<PlsModel> {
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if n < 2 {
        return Err(Error::Domain(format!("PLS needs at least 2 points, got {n}")));
    }
    if r_max == 0 {
        return Err(Error::Config("r_max must be at least 1".into()));
    }
    let mu_x = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let mu_y = y.iter().sum::<f64>() / n as f64;
    let mut xe = x.clone();
    for mut row in xe.row_iter_mut() {
        row -= mu_x.transpose();
    }
    let mut ye = DVector::from_iterator(n, y.iter().map(|v| v - mu_y));
    let y_norm = ye.norm();
    if y_norm <= 1e-14 * (1.0 + mu_y.abs()) * (n as f64).sqrt() {
        return Err(Error::ConstantResponse);
    }
    let x_scale = xe.norm();

    let r_cap = r_max.min(d).min(n - 1).max(1);
    let mut ws = Vec::new();
    let mut ps = Vec::new();
    let mut hs = Vec::new();
    let mut bs = Vec::new();
    let mut residual_norms = Vec::new();
    let mut exhausted = false;
    while ws.len() < r_cap {
        let xty = xe.transpose() * &ye;
        let cov = xty.norm();
        if cov <= 1e-12 * x_scale * y_norm {
            exhausted = true;
            break;
        }
        let w = xty / cov;
        let h = &xe * &w;
        let hh = h.dot(&h);
        if hh <= 1e-24 * x_scale * x_scale {
            exhausted = true;
            break;
        }
        let p = xe.transpose() * &h / hh;
        let b = h.dot(&ye) / hh;
        xe -= &h * p.transpose();
        ye -= &h * b;
        ws.push(w);
        ps.push(p);
        hs.push(h);
        bs.push(b);
        residual_norms.push(ye.norm());
        if ye.norm() <= eps_y {
            break;
        }
    }
    if ws.is_empty() {
        return Err(Error::Numeric("no PLS component could be extracted".into()));
    }
    let w = DMatrix::from_columns(&ws);
    let p = DMatrix::from_columns(&ps);
    let ptw = p.transpose() * &w;
    let inv = ptw
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("P^T W is singular".into()))?;
    let r_pls = &w * inv;
    Ok(PlsModel {
        mu_x,
        mu_y,
        w,
        p,
        b: DVector::from_vec(bs),
        r_pls,
        scores: DMatrix::from_columns(&hs),
        residual_norms,
        exhausted,
    })
}

/// [`pls1_fit`] with the default stopping rule.
pub fn pls1_fit_default(x: &DMatrix<f64>, y: &[f64]) -> Result<PlsModel> {
    let (eps, r_max) = default_stopping(y);
    pls1_fit(x, y, eps, r_max)
}

impl PlsModel {
    pub fn r(&self) -> usize {
        self.w.ncols()
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Latent coordinates of each row of `x`.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= self.mu_x.transpose();
        }
        c * &self.r_pls
    }

    /// Latent coordinates of one point.
    pub fn project_point(&self, x: &[f64]) -> Vec<f64> {
        let r = self.r();
        let mut out = vec![0.0; r];
        for (i, xi) in x.iter().enumerate() {
            let c = xi - self.mu_x[i];
            for (k, o) in out.iter_mut().enumerate() {
                *o += c * self.r_pls[(i, k)];
            }
        }
        out
    }

    /// Input point whose latent coordinates are `h`, obtained by moving from
    /// `anchor` along the loadings: `anchor + P (h - project(anchor))`.
    pub fn lift(&self, anchor: &[f64], h: &[f64]) -> Vec<f64> {
        let ha = self.project_point(anchor);
        let mut out = anchor.to_vec();
        for k in 0..self.r() {
            let dk = h[k] - ha[k];
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.p[(i, k)] * dk;
            }
        }
        out
    }

    /// Linear PLS regression prediction.
    pub fn predict_linear(&self, x: &[f64]) -> f64 {
        let h = self.project_point(x);
        self.mu_y + h.iter().zip(self.b.iter()).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Rows of `x` as a matrix.
fn rows_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// Local GP in a PLS latent subspace.
#[derive(Debug, Clone)]
pub struct PlsGpModel {
    pub pls: PlsModel,
    pub gp: GpModel,
    /// Design indices the GP was fitted on.
    pub members: Vec<usize>,
    /// Query point in latent coordinates.
    pub center: Vec<f64>,
    /// Latent distance to the farthest member.
    pub radius: f64,
    /// Set when the global subspace was used: the local PLS degenerated or
    /// left a larger pilot residual than the global linear model.
    pub global_fallback: bool,
}

impl Predictor for PlsGpModel {
    fn predict(&self, v: &[f64]) -> Prediction {
        self.gp.predict(&self.pls.project_point(v))
    }
}

/// Number of GP training points in a latent space of dimension `r_local`
/// given a global subspace of dimension `r_global`.
pub fn latent_n0(r_local: usize, r_global: usize) -> usize {
    (2 * r_local + 10).max(3 * r_global)
}

/// Two-stage composite surrogate at `v`: the `pilot_n0` design points
/// nearest to `v` in the global latent space define a local PLS subspace,
/// and a GP is fitted on the [`latent_n0`] pilot points nearest to `v`
/// in local latent coordinates. The global subspace replaces the local one
/// when the local fit fails or explains the pilot worse than the global
/// linear model does.
pub fn fit_local_pls_gp(
    design: &DesignSet,
    global: &PlsModel,
    v: &[f64],
    pilot_n0: usize,
    gp_cfg: &GpConfig,
) -> Result<PlsGpModel> {
    let latent: Vec<Vec<f64>> = design.points().iter().map(|x| global.project_point(x)).collect();
    fit_local_pls_gp_cached(design, global, &latent, v, pilot_n0, gp_cfg)
}

/// [`fit_local_pls_gp`] with the global latent coordinates of the design
/// points precomputed (`latent[i]` for design point `i`).
pub fn fit_local_pls_gp_cached(
    design: &DesignSet,
    global: &PlsModel,
    latent: &[Vec<f64>],
    v: &[f64],
    pilot_n0: usize,
    gp_cfg: &GpConfig,
) -> Result<PlsGpModel> {
    if v.len() != design.dim() {
        return Err(Error::Dimension { expected: design.dim(), got: v.len() });
    }
    if latent.len() != design.len() {
        return Err(Error::Dimension { expected: design.len(), got: latent.len() });
    }
    let hv = global.project_point(v);
    let hd = latent;
    let pilot: Vec<usize> = nearest_by(design.len(), pilot_n0, |i| sq_dist(&hd[i], &hv))?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let pilot_x = rows_matrix(&pilot.iter().map(|&i| design.point(i)).collect::<Vec<_>>());
    let pilot_y: Vec<f64> = pilot.iter().map(|&i| design.value(i)).collect();

    let (local, global_fallback) = match pls1_fit_default(&pilot_x, &pilot_y) {
        Ok(m) if m.residual_norms.last().copied().unwrap_or(f64::INFINITY) <= global_residual(global, &pilot, design) => {
            (m, false)
        }
        _ => (global.clone(), true),
    };
    let hl: Vec<Vec<f64>> = pilot.iter().map(|&i| local.project_point(design.point(i))).collect();
    let center = local.project_point(v);
    let n_gp = latent_n0(local.r(), global.r()).min(pilot.len());
    let chosen = nearest_by(pilot.len(), n_gp, |k| sq_dist(&hl[k], &center))?;
    let radius = chosen.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    let members: Vec<usize> = chosen.iter().map(|&(k, _)| pilot[k]).collect();
    let gx = rows_matrix(&chosen.iter().map(|&(k, _)| hl[k].as_slice()).collect::<Vec<_>>());
    let gy: Vec<f64> = members.iter().map(|&i| design.value(i)).collect();
    let gp = GpModel::fit(&gx, &gy, gp_cfg)?;
    Ok(PlsGpModel { pls: local, gp, members, center, radius, global_fallback })
}

/// Norm of the global linear PLS residual over the pilot points, centered
/// on the pilot mean so it is comparable with a PLS fit on the pilot alone.
fn global_residual(global: &PlsModel, pilot: &[usize], design: &DesignSet) -> f64 {
    let res: Vec<f64> = pilot.iter().map(|&i| design.value(i) - global.predict_linear(design.point(i))).collect();
    let m = res.iter().sum::<f64>() / res.len() as f64;
    res.iter().map(|r| (r - m).powi(2)).sum::<f64>().sqrt()
}
