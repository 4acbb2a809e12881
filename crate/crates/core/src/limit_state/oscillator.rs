//! Hysteretic (Bouc–Wen) single-degree-of-freedom oscillator under a
//! white-noise load given by its Fourier coefficients.
//!
//! Equation of motion, starting from rest:
//!
//! ```text
//! m0 u'' + a u' + a0 [alpha u + (1 - alpha) u_y z] = Psi(t)
//! z' = (u' - bw_beta |u'| |z|^(n-1) z - bw_gamma u' |z|^n) / u_y
//! ```
//!
//! The limit state is `u(t_end) + failure_offset`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LimitState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    pub m0: f64,
    pub a0: f64,
    pub zeta: f64,
    pub u_y: f64,
    pub alpha: f64,
    pub s0: f64,
    /// Number of Fourier coefficients (two per frequency).
    pub d: usize,
    pub w_cut: f64,
    pub t_end: f64,
    /// Loading grid points / integration intervals over `[0, t_end]`.
    pub n_time: usize,
    pub failure_offset: f64,
    /// RK4 substeps per loading interval.
    pub substeps: usize,
    pub bw_beta: f64,
    pub bw_gamma: f64,
    pub bw_n: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            m0: 6e4,
            a0: 5e6,
            zeta: 0.05,
            u_y: 0.04,
            alpha: 0.1,
            s0: 0.03,
            d: 300,
            w_cut: 15.0 * PI,
            t_end: 8.0,
            n_time: 110,
            failure_offset: 0.3,
            substeps: 32,
            bw_beta: 0.5,
            bw_gamma: 0.5,
            bw_n: 1.0,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::Config(format!("oscillator d must be even and positive, got {}", self.d)));
        }
        if self.n_time < 2 || self.substeps == 0 {
            return Err(Error::Config("oscillator needs n_time >= 2 and substeps >= 1".into()));
        }
        if !(self.m0 > 0.0 && self.a0 > 0.0 && self.u_y > 0.0 && self.t_end > 0.0) {
            return Err(Error::Config("oscillator m0, a0, u_y, t_end must be positive".into()));
        }
        Ok(())
    }

    /// Frequency spacing `2 w_cut / d` (equals `30 pi / d` at the default cut-off).
    pub fn delta_w(&self) -> f64 {
        2.0 * self.w_cut / self.d as f64
    }

    pub fn s_w(&self) -> f64 {
        (2.0 * self.s0 * self.delta_w()).sqrt()
    }

    pub fn damping(&self) -> f64 {
        2.0 * self.m0 * self.zeta * (self.a0 / self.m0).sqrt()
    }

    /// Equally spaced times `t_0 = 0 .. t_{n-1} = t_end` of the loading grid.
    pub fn loading_grid(&self) -> Vec<f64> {
        let n = self.n_time;
        (0..n).map(|k| self.t_end * k as f64 / (n - 1) as f64).collect()
    }
}

/// `Psi(t) = -m0 S_w sum_n [theta_n cos(w_n t) + theta_{d/2+n} sin(w_n t)]`.
pub fn loading_psi(theta: &[f64], cfg: &OscillatorConfig, t: f64) -> f64 {
    let half = cfg.d / 2;
    let dw = cfg.delta_w();
    let s: f64 = (1..=half)
        .map(|n| {
            let w = n as f64 * dw;
            theta[n - 1] * (w * t).cos() + theta[half + n - 1] * (w * t).sin()
        })
        .sum();
    -cfg.m0 * cfg.s_w() * s
}

/// Integrates the oscillator with classical RK4 over `steps` steps of size `h`.
/// `force_half[k]` is the load at time `k h / 2`, so it holds `2 steps + 1` values.
/// Returns the final displacement.
pub(crate) fn integrate(cfg: &OscillatorConfig, force_half: &[f64], h: f64, steps: usize) -> f64 {
    debug_assert_eq!(force_half.len(), 2 * steps + 1);
    let inv_m = 1.0 / cfg.m0;
    let c = cfg.damping();
    let (alpha, uy, beta, gamma, n) = (cfg.alpha, cfg.u_y, cfg.bw_beta, cfg.bw_gamma, cfg.bw_n);
    let rhs = |s: [f64; 3], f: f64| -> [f64; 3] {
        let [u, v, z] = s;
        let restoring = cfg.a0 * (alpha * u + (1.0 - alpha) * uy * z);
        let acc = (f - c * v - restoring) * inv_m;
        let az = z.abs();
        let zn = if n == 1.0 { az } else { az.powf(n) };
        let zn1 = if n == 1.0 { 1.0 } else { az.powf(n - 1.0) };
        let dz = (v - beta * v.abs() * zn1 * z - gamma * v * zn) / uy;
        [v, acc, dz]
    };
    let axpy = |s: [f64; 3], k: [f64; 3], a: f64| [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]];
    let mut s = [0.0; 3];
    for i in 0..steps {
        let (f0, fm, f1) = (force_half[2 * i], force_half[2 * i + 1], force_half[2 * i + 2]);
        let k1 = rhs(s, f0);
        let k2 = rhs(axpy(s, k1, 0.5 * h), fm);
        let k3 = rhs(axpy(s, k2, 0.5 * h), fm);
        let k4 = rhs(axpy(s, k3, h), f1);
        for j in 0..3 {
            s[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    s[0]
}

/// The oscillator limit state in Fourier-coefficient space.
///
/// The cosine and sine tables at every RK4 stage time are built once, so an
/// evaluation is one matrix-vector product plus the integration.
#[derive(Debug, Clone)]
pub struct Oscillator {
    cfg: OscillatorConfig,
    steps: usize,
    h: f64,
    cos: DMatrix<f64>,
    sin: DMatrix<f64>,
}

impl Oscillator {
    pub fn new(cfg: OscillatorConfig) -> Result<Self> {
        cfg.validate()?;
        let steps = cfg.n_time * cfg.substeps;
        let h = cfg.t_end / steps as f64;
        let half = cfg.d / 2;
        let dw = cfg.delta_w();
        let nt = 2 * steps + 1;
        let cos = DMatrix::from_fn(nt, half, |k, n| ((n + 1) as f64 * dw * k as f64 * 0.5 * h).cos());
        let sin = DMatrix::from_fn(nt, half, |k, n| ((n + 1) as f64 * dw * k as f64 * 0.5 * h).sin());
        Ok(Self { cfg, steps, h, cos, sin })
    }

    pub fn config(&self) -> &OscillatorConfig {
        &self.cfg
    }

    /// Load at every RK4 stage time `k h / 2`.
    pub fn stage_loads(&self, theta: &[f64]) -> Vec<f64> {
        let half = self.cfg.d / 2;
        let a = DVector::from_column_slice(&theta[..half]);
        let b = DVector::from_column_slice(&theta[half..]);
        let scale = -self.cfg.m0 * self.cfg.s_w();
        ((&self.cos * a + &self.sin * b) * scale).iter().copied().collect()
    }

    /// Displacement at `t_end`.
    pub fn final_displacement(&self, theta: &[f64]) -> Result<f64> {
        let u = integrate(&self.cfg, &self.stage_loads(theta), self.h, self.steps);
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::Evaluation { theta: theta.to_vec() })
        }
    }
}

impl LimitState for Oscillator {
    fn dim(&self) -> usize {
        self.cfg.d
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.final_displacement(x)? + self.cfg.failure_offset)
    }
}
