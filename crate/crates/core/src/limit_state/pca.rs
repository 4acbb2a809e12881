//! Principal-component reparameterization of the oscillator load.
//!
//! The load is sampled on the `n_time` grid from many Fourier-coefficient
//! draws; the eigenvectors of its empirical covariance give uncorrelated
//! components, each fitted with a normal law. The reduced limit state takes
//! one standard-normal input per component, rebuilds the load on the grid
//! and drives the oscillator with linear interpolation between grid nodes.

use nalgebra::{DMatrix, DVector};

use super::oscillator::{integrate, loading_psi, OscillatorConfig};
use super::LimitState;
use crate::error::{Error, Result};
use crate::normal::standard_normal_matrix;
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct LoadingPca {
    pub cfg: OscillatorConfig,
    pub grid: Vec<f64>,
    pub mean: DVector<f64>,
    /// Eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Normal fit (mean, std) of each projected component.
    pub component_fits: Vec<(f64, f64)>,
}

/// Load realization on the PCA grid for Fourier coefficients `theta`.
pub fn loading_on_grid(theta: &[f64], cfg: &OscillatorConfig) -> DVector<f64> {
    DVector::from_iterator(cfg.n_time, cfg.loading_grid().into_iter().map(|t| loading_psi(theta, cfg, t)))
}

pub fn pca_loading_reduction(cfg: &OscillatorConfig, n_realizations: usize, stream: RngStream) -> Result<LoadingPca> {
    cfg.validate()?;
    let nt = cfg.n_time;
    if n_realizations < nt {
        return Err(Error::Config(format!(
            "PCA needs at least {nt} load realizations, got {n_realizations}"
        )));
    }
    let theta = standard_normal_matrix(n_realizations, cfg.d, stream);
    let mut loads = DMatrix::zeros(n_realizations, nt);
    for i in 0..n_realizations {
        let row: Vec<f64> = theta.row(i).iter().copied().collect();
        loads.set_row(i, &loading_on_grid(&row, cfg).transpose());
    }
    let mean = loads.row_mean().transpose();
    let mut centered = loads.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n_realizations - 1) as f64;
    let (mut values, vectors) = crate::linalg::symmetric_eigen_desc(&cov);
    let vmax = values.max().max(0.0);
    if values.iter().any(|&v| v < -1e-8 * vmax) {
        return Err(Error::Numeric("load covariance is not positive semidefinite".into()));
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));

    let projected = &centered * &vectors;
    let component_fits = projected
        .column_iter()
        .map(|c| {
            let m = c.mean();
            let var = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n_realizations - 1) as f64;
            (m, var.sqrt())
        })
        .collect();

    Ok(LoadingPca {
        cfg: cfg.clone(),
        grid: cfg.loading_grid(),
        mean,
        eigenvalues: values,
        eigenvectors: vectors,
        component_fits,
    })
}

impl LoadingPca {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Cumulative share of the total variance carried by the leading components.
    pub fn cumulative_variance(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|v| {
                acc += v;
                acc / total
            })
            .collect()
    }

    pub fn project(&self, load: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.transpose() * (load - &self.mean)
    }

    pub fn reconstruct(&self, components: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.eigenvectors * components
    }

    /// Load on the grid for standard-normal inputs `xi`, one per component.
    pub fn load_from_standard(&self, xi: &[f64]) -> DVector<f64> {
        let comps = DVector::from_iterator(
            xi.len(),
            xi.iter().zip(&self.component_fits).map(|(z, (m, s))| m + s * z),
        );
        self.reconstruct(&comps)
    }

    pub fn into_limit_state(self) -> Result<PcaOscillator> {
        PcaOscillator::new(self)
    }
}

/// Oscillator limit state driven by the PCA components of the load.
#[derive(Debug, Clone)]
pub struct PcaOscillator {
    pca: LoadingPca,
    steps: usize,
    h: f64,
}

impl PcaOscillator {
    pub fn new(pca: LoadingPca) -> Result<Self> {
        let intervals = pca.grid.len() - 1;
        let steps = intervals * pca.cfg.substeps;
        let h = pca.cfg.t_end / steps as f64;
        Ok(Self { pca, steps, h })
    }

    pub fn pca(&self) -> &LoadingPca {
        &self.pca
    }

    fn stage_loads(&self, grid_load: &DVector<f64>) -> Vec<f64> {
        let dt = self.pca.grid[1] - self.pca.grid[0];
        let last = grid_load.len() - 1;
        (0..=2 * self.steps)
            .map(|k| {
                let t = k as f64 * 0.5 * self.h;
                let pos = (t / dt).min(last as f64);
                let i = (pos.floor() as usize).min(last - 1);
                let frac = pos - i as f64;
                grid_load[i] * (1.0 - frac) + grid_load[i + 1] * frac
            })
            .collect()
    }
}

impl LimitState for PcaOscillator {
    fn dim(&self) -> usize {
        self.pca.n_components()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let load = self.pca.load_from_standard(x);
        let u = integrate(&self.pca.cfg, &self.stage_loads(&load), self.h, self.steps);
        if u.is_finite() {
            Ok(u + self.pca.cfg.failure_offset)
        } else {
            Err(Error::Evaluation { theta: x.to_vec() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted() -> LoadingPca {
        pca_loading_reduction(&OscillatorConfig::default(), 2000, RngStream::new(1, 4)).unwrap()
    }

    #[test]
    fn spectrum_sorted_and_complete() {
        let pca = fitted();
        assert_eq!(pca.n_components(), 110);
        assert!(pca.eigenvalues.iter().all(|&v| v >= 0.0));
        assert!(pca.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let cum = pca.cumulative_variance();
        assert!((cum[109] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_round_trip() {
        let pca = fitted();
        let held_out: Vec<f64> = standard_normal_matrix(1, 300, RngStream::new(99, 0)).iter().copied().collect();
        let load = loading_on_grid(&held_out, &pca.cfg);
        let back = pca.reconstruct(&pca.project(&load));
        assert!((&back - &load).norm() <= 1e-8 * load.norm());
    }

    #[test]
    fn mean_input_gives_mean_load() {
        let pca = fitted();
        let osc = PcaOscillator::new(pca.clone()).unwrap();
        assert_eq!(osc.dim(), 110);
        let zero = vec![0.0; 110];
        let load = pca.load_from_standard(&zero);
        let fits_mean = pca.reconstruct(&DVector::from_iterator(110, pca.component_fits.iter().map(|f| f.0)));
        assert!((load - fits_mean).norm() < 1e-9);
        assert!(osc.value(&zero).unwrap().is_finite());
    }

    #[test]
    fn too_few_realizations() {
        assert!(pca_loading_reduction(&OscillatorConfig::default(), 50, RngStream::new(0, 0)).is_err());
    }
}
