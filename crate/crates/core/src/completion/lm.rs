//! Damped Gauss-Newton (Levenberg-Marquardt) with a forward-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
}

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    pub step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 100,
            step: 1e-7,
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum r_i(x)^2`. `residuals` writes into the provided buffer and
/// may return `false` when `x` is outside its domain.
pub(crate) fn minimize(
    x0: &[f64],
    opts: &LmOptions,
    mut residuals: impl FnMut(&[f64], &mut Vec<f64>) -> bool,
) -> Option<LmOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = Vec::new();
    if !residuals(&x, &mut r) || r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let m = r.len();
    let mut cost = sum_sq(&r);
    let mut mu = 1e-3;
    let mut trial = Vec::with_capacity(m);
    let mut shifted = Vec::with_capacity(m);
    for _ in 0..opts.max_iterations {
        if cost < 1e-28 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, n);
        let mut xs = x.clone();
        for j in 0..n {
            let h = opts.step * x[j].abs().max(1.0);
            xs[j] = x[j] + h;
            if !residuals(&xs, &mut shifted) {
                xs[j] = x[j] - h;
                if !residuals(&xs, &mut shifted) {
                    return None;
                }
                for i in 0..m {
                    jac[(i, j)] = (r[i] - shifted[i]) / h;
                }
            } else {
                for i in 0..m {
                    jac[(i, j)] = (shifted[i] - r[i]) / h;
                }
            }
            xs[j] = x[j];
        }
        let rv = DVector::from_column_slice(&r);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        let mut improved = false;
        while mu < 1e12 {
            let mut damped = a.clone();
            for j in 0..n {
                damped[(j, j)] += mu * a[(j, j)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let cand: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if residuals(&cand, &mut trial) && trial.iter().all(|v| v.is_finite()) {
                let c = sum_sq(&trial);
                if c < cost {
                    let small =
                        delta.norm() <= 1e-13 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
                    let flat = cost - c <= 1e-15 * cost;
                    x = cand;
                    std::mem::swap(&mut r, &mut trial);
                    cost = c;
                    mu = (mu / 3.0).max(1e-12);
                    improved = !(small || flat);
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Some(LmOutcome { x, cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_as_least_squares() {
        let out = minimize(
            &[-1.2, 1.0],
            &LmOptions {
                max_iterations: 500,
                ..Default::default()
            },
            |x, r| {
                r.clear();
                r.push(10.0 * (x[1] - x[0] * x[0]));
                r.push(1.0 - x[0]);
                true
            },
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
        assert!(out.cost < 1e-12);
    }

    #[test]
    fn circle_fit() {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let t = k as f64 * 0.4;
                (3.0 + 2.0 * t.cos(), -1.0 + 2.0 * t.sin())
            })
            .collect();
        let out = minimize(&[0.0, 0.0, 1.0], &LmOptions::default(), |x, r| {
            r.clear();
            r.extend(
                pts.iter()
                    .map(|(a, b)| ((a - x[0]).powi(2) + (b - x[1]).powi(2)).sqrt() - x[2]),
            );
            true
        })
        .unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-8);
        assert!((out.x[1] + 1.0).abs() < 1e-8);
        assert!((out.x[2] - 2.0).abs() < 1e-8);
    }
}
