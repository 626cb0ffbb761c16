//! Closest points on ellipses and ellipsoids.
//!
//! For a query `y` (first orthant, all components >= 0) and semi-axes `e`,
//! the closest point is `x_i = e_i^2 y_i / (t + e_i^2)` where `t` is the
//! unique root of `sum (e_i y_i / (t + e_i^2))^2 = 1` with `t > -min(e)^2`.
//! That function is convex and decreasing there, so Newton started left of
//! the root converges monotonically. A zero coordinate on the minor axis is
//! handled separately.

const MAX_ITERS: usize = 100;

/// Closest point to `y` on the axis-aligned ellipsoid/ellipse with semi-axes
/// `e` (N = 2 or 3). Signs of `y` are handled by reflection.
pub(crate) fn closest_point<const N: usize>(e: [f64; N], y: [f64; N]) -> [f64; N] {
    let mut a = [0.0; N];
    for i in 0..N {
        a[i] = y[i].abs();
    }
    let idx: Vec<usize> = (0..N).collect();
    let mut x = [0.0; N];
    solve(&e, &a, &idx, &mut x);
    for i in 0..N {
        if y[i] < 0.0 {
            x[i] = -x[i];
        }
    }
    x
}

/// First-orthant solve restricted to the axes in `idx`; the other axes of
/// `x` are left at zero.
fn solve(e: &[f64], a: &[f64], idx: &[usize], x: &mut [f64]) {
    if idx.len() == 1 {
        x[idx[0]] = e[idx[0]];
        return;
    }
    let emin = idx.iter().map(|&i| e[i]).fold(f64::INFINITY, f64::min);
    // a minor axis with a non-zero coordinate if there is one
    let minor = idx
        .iter()
        .copied()
        .filter(|&i| e[i] == emin)
        .max_by(|&i, &j| a[i].total_cmp(&a[j]).then(j.cmp(&i)))
        .unwrap_or(idx[0]);

    // Below this the Newton bracket collapses in floating point; the planar
    // solution is then exact to ~1e-9 mm.
    let emax = idx.iter().map(|&i| e[i]).fold(0.0, f64::max);
    if a[minor] > 1e-10 * emax {
        newton(e, a, idx, minor, x);
        return;
    }

    // On the plane of the minor axis: the closest point either leaves that
    // plane (t = -emin^2) or lies on the lower-dimensional section.
    let mut s = 0.0;
    for &j in idx {
        if j == minor {
            continue;
        }
        x[j] = if e[j] > emin {
            e[j] * e[j] * a[j] / (e[j] * e[j] - emin * emin)
        } else {
            0.0
        };
        s += (x[j] / e[j]).powi(2);
    }
    if s < 1.0 {
        x[minor] = emin * (1.0 - s).sqrt();
        return;
    }
    let rest: Vec<usize> = idx.iter().copied().filter(|&j| j != minor).collect();
    for &j in &rest {
        x[j] = 0.0;
    }
    x[minor] = 0.0;
    solve(e, a, &rest, x);
}

fn newton(e: &[f64], a: &[f64], idx: &[usize], minor: usize, x: &mut [f64]) {
    let emin = e[minor];
    // s = t / emin^2, r_i = (e_i / emin)^2, z_i = a_i / e_i
    let f = |s: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for &i in idx {
            let r = (e[i] / emin).powi(2);
            let q = r * (a[i] / e[i]) / (s + r);
            val += q * q;
            der += -2.0 * q * q / (s + r);
        }
        (val, der)
    };
    // F(z_minor - 1) >= 0 because the minor-axis term alone equals 1.
    let mut s = a[minor] / emin - 1.0;
    for _ in 0..MAX_ITERS {
        let (val, der) = f(s);
        if val <= 0.0 || der == 0.0 {
            break;
        }
        let next = s - val / der;
        if !(next > s) {
            break;
        }
        let done = (next - s).abs() <= 1e-15 * (1.0 + s.abs());
        s = next;
        if done {
            break;
        }
    }
    let t = s * emin * emin;
    for &i in idx {
        x[i] = e[i] * e[i] * a[i] / (t + e[i] * e[i]);
    }
}
