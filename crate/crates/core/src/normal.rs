//! Standard-normal machinery: density, CDF, quantile, and iid draws.

use libm::erfc;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Acklam's rational approximation, refined below by one Halley step.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam(u: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse standard normal CDF on the open interval (0, 1).
pub fn inv_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("inverse normal CDF needs 0 < u < 1, got {u}")));
    }
    let x = acklam(u);
    // Halley refinement; the residual is taken on the smaller tail to keep precision.
    let e = if u < 0.5 { cdf(x) - u } else { (1.0 - u) - cdf(-x) };
    let step = e / pdf(x);
    Ok(x - step / (1.0 + 0.5 * x * step))
}

/// Indicator of the (intermediate) failure event `{g <= c}`.
#[inline]
pub fn indicator(g_value: f64, c: f64) -> u8 {
    u8::from(g_value <= c)
}

/// `n x d` matrix of iid N(0, 1) draws, filled row by row.
pub fn standard_normal_matrix(n: usize, d: usize, stream: RngStream) -> DMatrix<f64> {
    let mut rng = stream.rng();
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn median_is_zero() {
        assert_abs_diff_eq!(inv_cdf(0.5).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn known_quantiles() {
        // tabulated quantile z_{0.975}
        assert_abs_diff_eq!(inv_cdf(0.975).unwrap(), 1.959_963_984_540_054, epsilon = 1e-12);
        // Phi(-4), the reference probability of the linear benchmark
        assert_abs_diff_eq!(cdf(-4.0), 3.167_124_183_311_992e-5, epsilon = 1e-17);
        assert!((cdf(-4.0) - 3.167e-5).abs() < 1e-8);
    }

    #[test]
    fn domain_errors() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(inv_cdf(u), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn indicator_is_inclusive() {
        assert_eq!(indicator(-0.5, 0.0), 1);
        assert_eq!(indicator(0.0, 0.0), 1);
        assert_eq!(indicator(0.1, 0.0), 0);
    }

    #[test]
    fn normal_matrix_shape_and_determinism() {
        let s = RngStream::new(42, 0);
        assert_eq!(standard_normal_matrix(3, 2, s), standard_normal_matrix(3, 2, s));
        let wide = standard_normal_matrix(1, 300, s);
        assert_eq!(wide.len(), 300);
    }

    #[test]
    fn normal_matrix_moments() {
        let m = standard_normal_matrix(100_000, 1, RngStream::new(3, 1));
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    proptest! {
        #[test]
        fn cdf_and_quantile_are_inverse(e in -12.0f64..-0.0) {
            let lo = 10f64.powf(e);
            for u in [lo, 1.0 - lo, 0.5 * lo + 0.25] {
                if u > 0.0 && u < 1.0 {
                    let x = inv_cdf(u).unwrap();
                    prop_assert!((cdf(x) - u).abs() <= 1e-12);
                }
            }
        }
    }
}
