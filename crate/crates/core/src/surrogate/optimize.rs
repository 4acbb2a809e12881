//! Box-constrained Nelder–Mead used for kernel hyperparameters.

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`, using at most
/// `max_evals` function evaluations. Returns the best point and value.
pub fn nelder_mead_box<F>(f: &mut F, x0: &[f64], lo: &[f64], hi: &[f64], max_evals: usize) -> (Vec<f64>, f64, usize)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = {
        let mut x = x0.to_vec();
        clamp(&mut x);
        x
    };
    let fx = eval(&start, &mut evals);
    simplex.push((start.clone(), fx));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = start.clone();
        let width = hi[i] - lo[i];
        let step = 0.1 * width;
        x[i] = if x[i] + step <= hi[i] { x[i] + step } else { x[i] - step };
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    if simplex.len() < n + 1 {
        let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        return (best.0, best.1, evals);
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() <= 1e-10 * (1.0 + simplex[0].1.abs()) && simplex[0].1.is_finite() {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |a: f64, target: &[f64]| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n).map(|j| centroid[j] + a * (target[j] - centroid[j])).collect();
            clamp(&mut x);
            x
        };
        let worst = simplex[n].0.clone();
        let xr = toward(-1.0, &worst);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= max_evals {
                simplex[n] = (xr, fr);
                break;
            }
            let xe = toward(-2.0, &worst);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            if evals >= max_evals {
                break;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let x = toward(-0.5, &worst);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = toward(0.5, &worst);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for k in 1..=n {
                    if evals >= max_evals {
                        break;
                    }
                    let mut x: Vec<f64> = (0..n).map(|j| best[j] + 0.5 * (simplex[k].0[j] - best[j])).collect();
                    clamp(&mut x);
                    let v = eval(&x, &mut evals);
                    simplex[k] = (x, v);
                }
            }
        }
    }
    let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    (best.0, best.1, evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let mut f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let (x, v, evals) = nelder_mead_box(&mut f, &[0.0, 0.0], &[-5.0, -5.0], &[5.0, 5.0], 400);
        assert!(v < 1e-8, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
        assert!(evals <= 400);
    }

    #[test]
    fn respects_bounds() {
        let mut f = |x: &[f64]| x[0];
        let (x, _, _) = nelder_mead_box(&mut f, &[0.5], &[0.0], &[1.0], 100);
        assert!(x[0] >= 0.0 && x[0] < 1e-6);
    }

    #[test]
    fn budget_is_hard() {
        let mut count = 0;
        let mut f = |x: &[f64]| {
            count += 1;
            x.iter().map(|v| v.sin()).sum::<f64>()
        };
        let (_, _, evals) = nelder_mead_box(&mut f, &[0.3; 5], &[-3.0; 5], &[3.0; 5], 17);
        assert!(evals <= 17);
        assert_eq!(evals, count);
    }
}
