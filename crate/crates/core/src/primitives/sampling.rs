use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PrimitiveShape, ShapeParams};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, UnitVec3};

/// `n` area-uniform surface points with outward normals, in the base frame.
///
/// Flat parts (box faces, cylinder wall and caps) get stratified counts
/// proportional to area, so the per-part split is exact up to rounding.
/// Points are drawn in the object frame and then posed, so two shapes that
/// differ only by pose yield exactly corresponding samples for one seed.
pub fn sample_surface(shape: &PrimitiveShape, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    match *shape.params() {
        ShapeParams::Ball { rx, ry, rz } => {
            let gmax = (ry * rz).max(rx * rz).max(rx * ry);
            while points.len() < n {
                let u = unit_sphere(&mut rng);
                let g =
                    ((ry * rz * u.x).powi(2) + (rx * rz * u.y).powi(2) + (rx * ry * u.z).powi(2))
                        .sqrt();
                if rng.random::<f64>() * gmax > g {
                    continue;
                }
                let p = Point3::new(rx * u.x, ry * u.y, rz * u.z);
                points.push(p);
                normals.push(UnitVec3::new_normalize(Point3::new(
                    p.x / (rx * rx),
                    p.y / (ry * ry),
                    p.z / (rz * rz),
                )));
            }
        }
        ShapeParams::Box { w, h, l } => {
            let half = [0.5 * w, 0.5 * h, 0.5 * l];
            let areas = [h * l, h * l, w * l, w * l, w * h, w * h];
            let counts = largest_remainder(n, &areas);
            for (face, &count) in counts.iter().enumerate() {
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut nrm = Point3::zeros();
                nrm[axis] = sign;
                for _ in 0..count {
                    let mut p = Point3::zeros();
                    p[axis] = sign * half[axis];
                    p[a] = rng.random_range(-half[a]..=half[a]);
                    p[b] = rng.random_range(-half[b]..=half[b]);
                    points.push(p);
                    normals.push(UnitVec3::new_unchecked(nrm));
                }
            }
        }
        ShapeParams::Cylinder { rx, ry, h } => {
            let hz = 0.5 * h;
            let side = ellipse_perimeter(rx, ry) * h;
            let cap = PI * rx * ry;
            let counts = largest_remainder(n, &[side, cap, cap]);
            let smax = rx.max(ry);
            let mut k = 0;
            while k < counts[0] {
                let t = rng.random_range(0.0..2.0 * PI);
                let z = rng.random_range(-hz..=hz);
                let speed = ((rx * t.sin()).powi(2) + (ry * t.cos()).powi(2)).sqrt();
                if rng.random::<f64>() * smax > speed {
                    continue;
                }
                let (x, y) = (rx * t.cos(), ry * t.sin());
                points.push(Point3::new(x, y, z));
                normals.push(UnitVec3::new_normalize(Point3::new(
                    x / (rx * rx),
                    y / (ry * ry),
                    0.0,
                )));
                k += 1;
            }
            for (c, sign) in [(counts[1], 1.0), (counts[2], -1.0)] {
                for _ in 0..c {
                    let r = rng.random::<f64>().sqrt();
                    let t = rng.random_range(0.0..2.0 * PI);
                    points.push(Point3::new(rx * r * t.cos(), ry * r * t.sin(), sign * hz));
                    normals.push(UnitVec3::new_unchecked(Point3::new(0.0, 0.0, sign)));
                }
            }
        }
    }
    let local = PointCloud::new(points).with_normals(normals)?;
    Ok(local.transform(shape.pose()))
}

fn unit_sphere(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Splits `n` proportionally to `weights`; leftover units go to the largest
/// fractional parts, ties to the lower index.
pub(crate) fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - exact[i].floor();
        let fj = exact[j] - exact[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Perimeter of an ellipse by composite Simpson integration of its speed.
pub(crate) fn ellipse_perimeter(rx: f64, ry: f64) -> f64 {
    if rx == ry {
        return 2.0 * PI * rx;
    }
    let m = 2000;
    let f = |t: f64| ((rx * t.sin()).powi(2) + (ry * t.cos()).powi(2)).sqrt();
    let step = 0.5 * PI / m as f64;
    let mut acc = f(0.0) + f(0.5 * PI);
    for i in 1..m {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
    }
    4.0 * acc * step / 3.0
}
