//! Least-squares primitive fits. Every fit runs in a frame derived from the
//! data itself (centroid plus principal axes with signs fixed by the contact
//! normals), so a rigidly moved input yields the same local fit.

use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Pose};
use crate::primitives::{PrimitiveShape, ShapeKind, ShapeParams};

/// Model classes the reference completer can fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FitClass {
    Sphere,
    Cylinder,
    Ellipsoid,
    Box,
}

impl FitClass {
    pub const ALL: [FitClass; 4] = [
        FitClass::Sphere,
        FitClass::Cylinder,
        FitClass::Ellipsoid,
        FitClass::Box,
    ];

    /// Free parameters, used to break near-ties in favor of simpler models.
    pub fn parameter_count(self) -> usize {
        match self {
            FitClass::Sphere => 4,
            FitClass::Cylinder => 8,
            FitClass::Ellipsoid | FitClass::Box => 9,
        }
    }

    pub fn kind(self) -> ShapeKind {
        match self {
            FitClass::Sphere | FitClass::Ellipsoid => ShapeKind::Ball,
            FitClass::Box => ShapeKind::Box,
            FitClass::Cylinder => ShapeKind::Cylinder,
        }
    }
}

/// A fitted primitive with its quality measures, in the units of the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub class: FitClass,
    pub shape: PrimitiveShape,
    /// Mean |sdf| over inliers.
    pub residual: f64,
    pub inlier_fraction: f64,
    /// Mean of `min(|sdf|, inlier_tol)` over all points; outliers cost the
    /// full tolerance. Model selection ranks by this.
    pub score: f64,
    /// Mean cosine between measured normals and the fitted outward normals
    /// over inliers; negative when the body sits on the wrong side.
    pub normal_agreement: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Inlier tolerance relative to the RMS distance of the points from their centroid.
    pub inlier_rel: f64,
    /// Absolute floor of the inlier tolerance, input units.
    pub inlier_abs: f64,
    /// At most this many points enter a fit (farthest-point subset).
    pub max_points: usize,
    /// Fits whose bounding radius exceeds this multiple of the data extent are implausible.
    pub size_cap: f64,
    pub max_iterations: usize,
    /// Weight of a weak pull toward the data-derived initial parameters.
    /// It pins directions the data leaves free (e.g. the hidden length of a
    /// partly seen box), keeping the fit a continuous function of the input.
    pub prior_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            inlier_rel: 0.03,
            inlier_abs: 0.0,
            max_points: 256,
            size_cap: 4.0,
            max_iterations: 500,
            prior_weight: 1e-3,
        }
    }
}

/// Points and normals expressed in the canonical data frame.
pub(crate) struct Prepared {
    pub q: Vec<Point3>,
    pub m: Vec<Point3>,
    /// Canonical frame to input frame.
    pub frame: Pose,
    /// Covariance eigenvalues, descending.
    pub eig: [f64; 3],
    pub tol: f64,
    pub extent: f64,
}

/// Farthest-point subset of at most `max` indices, starting from the first
/// point. It keeps sparse regions and extremes that a stride would skip, and
/// depends on distances only.
fn farthest_points(pts: &[Point3], max: usize) -> Vec<usize> {
    if pts.len() <= max {
        return (0..pts.len()).collect();
    }
    let mut picked = Vec::with_capacity(max);
    let mut gap = vec![f64::INFINITY; pts.len()];
    let mut next = 0;
    while picked.len() < max {
        picked.push(next);
        let p = pts[next];
        let mut far = (0, -1.0);
        for (i, g) in gap.iter_mut().enumerate() {
            *g = g.min((pts[i] - p).norm_squared());
            if *g > far.1 {
                far = (i, *g);
            }
        }
        next = far.0;
    }
    picked.sort_unstable();
    picked
}

fn orient(v: Point3, pts: &[Point3], normals: &[Point3]) -> Point3 {
    let s: f64 = normals.iter().map(|n| n.dot(&v)).sum();
    if s.abs() > 1e-6 * normals.len() as f64 {
        return if s < 0.0 { -v } else { v };
    }
    let t: f64 = pts.iter().map(|p| p.dot(&v).powi(3)).sum();
    if t < 0.0 {
        -v
    } else {
        v
    }
}

pub(crate) fn prepare(cloud: &PointCloud, opts: &FitOptions) -> Result<Prepared> {
    if cloud.len() < 8 {
        return Err(Error::TooFewPoints {
            needed: 8,
            got: cloud.len(),
        });
    }
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidCloud("fitting needs normals".into()))?;
    let keep = farthest_points(cloud.points(), opts.max_points);
    let pts: Vec<Point3> = keep.iter().map(|&i| cloud.points()[i]).collect();
    let nrm: Vec<Point3> = keep.iter().map(|&i| normals[i].into_inner()).collect();
    let c = pts.iter().sum::<Point3>() / pts.len() as f64;
    let centered: Vec<Point3> = pts.iter().map(|p| p - c).collect();
    let mut cov = Matrix3::zeros();
    for p in &centered {
        cov += p * p.transpose();
    }
    cov /= pts.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = [
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    ];
    if !(vals[0] > 0.0) {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let e1 = orient(
        eig.eigenvectors.column(order[0]).into_owned(),
        &centered,
        &nrm,
    );
    let e2 = orient(
        eig.eigenvectors.column(order[1]).into_owned(),
        &centered,
        &nrm,
    );
    let e2 = (e2 - e1 * e1.dot(&e2)).normalize();
    let e3 = e1.cross(&e2);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[e1, e2, e3]));
    let frame = Pose::from_parts(rot, c);
    let q: Vec<Point3> = centered
        .iter()
        .map(|p| rot.inverse_transform_vector(p))
        .collect();
    let m: Vec<Point3> = nrm
        .iter()
        .map(|n| rot.inverse_transform_vector(n))
        .collect();
    let rms = (q.iter().map(|p| p.norm_squared()).sum::<f64>() / q.len() as f64).sqrt();
    let extent = q.iter().map(|p| p.norm()).fold(0.0, f64::max);
    Ok(Prepared {
        q,
        m,
        frame,
        eig: vals,
        tol: (opts.inlier_rel * rms).max(opts.inlier_abs),
        extent,
    })
}

fn shape_from(class: FitClass, x: &[f64], r0: &Rotation3<f64>) -> Option<PrimitiveShape> {
    let c = Point3::new(x[0], x[1], x[2]);
    if class == FitClass::Sphere {
        let r = x[3].exp();
        return PrimitiveShape::new(
            ShapeParams::Ball {
                rx: r,
                ry: r,
                rz: r,
            },
            Pose::from_parts(*r0, c),
        )
        .ok();
    }
    let rot = r0 * Rotation3::new(Point3::new(x[3], x[4], x[5]));
    let (a, b, d) = (x[6].exp(), x[7].exp(), x[8].exp());
    let params = match class {
        FitClass::Ellipsoid => ShapeParams::Ball {
            rx: a,
            ry: b,
            rz: d,
        },
        FitClass::Box => ShapeParams::Box { w: a, h: b, l: d },
        FitClass::Cylinder => ShapeParams::Cylinder { rx: a, ry: b, h: d },
        FitClass::Sphere => unreachable!(),
    };
    PrimitiveShape::new(params, Pose::from_parts(rot, c)).ok()
}

fn refine(
    class: FitClass,
    x0: Vec<f64>,
    r0: Rotation3<f64>,
    q: &[Point3],
    opts: &FitOptions,
) -> Option<(PrimitiveShape, f64)> {
    let lm = LmOptions {
        max_iterations: opts.max_iterations,
        ..LmOptions::default()
    };
    let w = opts.prior_weight * (q.len() as f64).sqrt();
    let out = minimize(&x0, &lm, |x, r| {
        if x[3..].iter().any(|v| !v.is_finite() || v.abs() > 50.0) {
            return false;
        }
        let Some(s) = shape_from(class, x, &r0) else {
            return false;
        };
        r.clear();
        r.extend(q.iter().map(|p| s.signed_distance(p)));
        r.extend(x.iter().zip(&x0).map(|(a, b)| w * (a - b)));
        true
    })?;
    Some((shape_from(class, &out.x, &r0)?, out.cost))
}

/// Algebraic sphere through the points: `|p|^2 = 2 c.p + k`.
fn kasa_sphere(q: &[Point3]) -> Option<(Point3, f64)> {
    let mut a = Matrix4::zeros();
    let mut b = Vector4::zeros();
    for p in q {
        let row = Vector4::new(2.0 * p.x, 2.0 * p.y, 2.0 * p.z, 1.0);
        a += row * row.transpose();
        b += row * p.norm_squared();
    }
    let sol = a.cholesky()?.solve(&b);
    let c = Point3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + c.norm_squared();
    (r2 > 0.0 && r2.is_finite()).then(|| (c, r2.sqrt()))
}

/// Algebraic circle through 2D points.
fn kasa_circle(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let mut a = Matrix3::zeros();
    let mut b = Point3::zeros();
    for &(x, y) in pts {
        let row = Point3::new(2.0 * x, 2.0 * y, 1.0);
        a += row * row.transpose();
        b += row * (x * x + y * y);
    }
    let sol = a.cholesky()?.solve(&b);
    let r2 = sol[2] + sol[0] * sol[0] + sol[1] * sol[1];
    (r2 > 0.0 && r2.is_finite()).then(|| (sol[0], sol[1], r2.sqrt()))
}

fn coplanar(p: &Prepared) -> bool {
    p.eig[2] <= 1e-10 * p.eig[0]
}

fn fit_sphere(p: &Prepared, opts: &FitOptions) -> Result<PrimitiveShape> {
    if coplanar(p) {
        return Err(Error::DegenerateConfiguration(
            "coplanar points do not determine a sphere".into(),
        ));
    }
    let (c, r) = kasa_sphere(&p.q)
        .ok_or_else(|| Error::DegenerateConfiguration("sphere system is singular".into()))?;
    let x0 = vec![c.x, c.y, c.z, r.ln()];
    refine(FitClass::Sphere, x0, Rotation3::identity(), &p.q, opts)
        .map(|(s, _)| s)
        .ok_or(Error::FitFailed)
}

fn fit_ellipsoid(p: &Prepared, opts: &FitOptions) -> Result<PrimitiveShape> {
    let sphere = fit_sphere(p, opts)?;
    let c = sphere.pose().translation();
    let lr = sphere.params().dims()[0].ln();
    let x0 = vec![c.x, c.y, c.z, 0.0, 0.0, 0.0, lr, lr, lr];
    refine(FitClass::Ellipsoid, x0, Rotation3::identity(), &p.q, opts)
        .map(|(s, _)| s)
        .ok_or(Error::FitFailed)
}

/// Mean of the sign-aligned normals around the normal with the most
/// neighbors within 15 degrees (as an axis), among `candidates`.
fn dominant_axis(m: &[Point3], candidates: &[usize]) -> Option<Point3> {
    let cos = 15f64.to_radians().cos();
    let mut best: Option<(usize, usize)> = None;
    for &i in candidates {
        let count = candidates
            .iter()
            .filter(|&&j| m[i].dot(&m[j]).abs() > cos)
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    let (i, _) = best?;
    let sum: Point3 = candidates
        .iter()
        .filter(|&&j| m[i].dot(&m[j]).abs() > cos)
        .map(|&j| if m[i].dot(&m[j]) < 0.0 { -m[j] } else { m[j] })
        .sum();
    let n = sum.norm();
    (n > 1e-12).then(|| sum / n)
}

fn least_aligned_axis(a: &Point3) -> Point3 {
    let axes = [Point3::x(), Point3::y(), Point3::z()];
    let mut best = axes[0];
    for e in axes {
        if e.dot(a).abs() < best.dot(a).abs() - 1e-12 {
            best = e;
        }
    }
    (best - a * a.dot(&best)).normalize()
}

/// Center and full length along `axis`: both faces seen pins both ends, a
/// single face pins one end and borrows `guess` for the length.
fn span_along(p: &Prepared, axis: &Point3, guess: f64) -> (f64, f64) {
    let proj: Vec<f64> = p.q.iter().map(|q| q.dot(axis)).collect();
    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let plus = p.m.iter().any(|n| n.dot(axis) > 0.9);
    let minus = p.m.iter().any(|n| n.dot(axis) < -0.9);
    let range = hi - lo;
    match (plus, minus) {
        (true, true) | (false, false) => (0.5 * (lo + hi), range.max(1e-3 * guess)),
        (true, false) => {
            let len = range.max(guess);
            (hi - 0.5 * len, len)
        }
        (false, true) => {
            let len = range.max(guess);
            (lo + 0.5 * len, len)
        }
    }
}

fn fit_box(p: &Prepared, opts: &FitOptions) -> Result<PrimitiveShape> {
    let all: Vec<usize> = (0..p.m.len()).collect();
    let a1 = dominant_axis(&p.m, &all).ok_or(Error::FitFailed)?;
    let side = 15f64.to_radians().sin();
    let ortho: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&j| p.m[j].dot(&a1).abs() < side)
        .collect();
    let a2 = match dominant_axis(&p.m, &ortho) {
        Some(v) => {
            let w = v - a1 * a1.dot(&v);
            if w.norm() > 1e-6 {
                w.normalize()
            } else {
                least_aligned_axis(&a1)
            }
        }
        None => least_aligned_axis(&a1),
    };
    let a3 = a1.cross(&a2);
    let axes = [a1, a2, a3];
    let ranges: Vec<f64> = axes
        .iter()
        .map(|a| {
            let proj = p.q.iter().map(|q| q.dot(a));
            let (lo, hi) = proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
            hi - lo
        })
        .collect();
    // An unseen face is placed conservatively: a belief that stops short
    // invites a touch that finds the face, one that overshoots never does.
    let mut sorted = ranges.clone();
    sorted.sort_by(f64::total_cmp);
    let guess = sorted[1];
    let mut center = Point3::zeros();
    let mut dims = [0.0; 3];
    for k in 0..3 {
        let (c, len) = span_along(p, &axes[k], guess);
        center += axes[k] * c;
        dims[k] = len;
    }
    let r0 = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&axes));
    let x0 = vec![
        center.x,
        center.y,
        center.z,
        0.0,
        0.0,
        0.0,
        dims[0].ln(),
        dims[1].ln(),
        dims[2].ln(),
    ];
    refine(FitClass::Box, x0, r0, &p.q, opts)
        .map(|(s, _)| s)
        .ok_or(Error::FitFailed)
}

fn fit_cylinder(p: &Prepared, opts: &FitOptions) -> Result<PrimitiveShape> {
    let mut nn = Matrix3::zeros();
    for n in &p.m {
        nn += n * n.transpose();
    }
    let eig = SymmetricEigen::new(nn);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut best: Option<(PrimitiveShape, f64)> = None;
    for &k in &order {
        let a = orient(eig.eigenvectors.column(k).into_owned(), &p.q, &p.m);
        let u = least_aligned_axis(&a);
        let v = a.cross(&u);
        let side: Vec<(f64, f64)> =
            p.q.iter()
                .zip(&p.m)
                .filter(|(_, n)| n.dot(&a).abs() < 0.9)
                .map(|(q, _)| (q.dot(&u), q.dot(&v)))
                .collect();
        if side.len() < 3 {
            continue;
        }
        let Some((cu, cv, r)) = kasa_circle(&side) else {
            continue;
        };
        let (ca, h) = span_along(p, &a, 2.0 * r);
        let center = u * cu + v * cv + a * ca;
        let r0 = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, a]));
        let x0 = vec![
            center.x,
            center.y,
            center.z,
            0.0,
            0.0,
            0.0,
            r.ln(),
            r.ln(),
            h.ln(),
        ];
        if let Some((s, cost)) = refine(FitClass::Cylinder, x0, r0, &p.q, opts) {
            if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                best = Some((s, cost));
            }
        }
    }
    best.map(|(s, _)| s).ok_or(Error::FitFailed)
}

/// Quality of `shape` (canonical frame) on the prepared data.
pub(crate) fn evaluate(class: FitClass, shape: PrimitiveShape, p: &Prepared) -> FitResult {
    let n = p.q.len() as f64;
    let mut inl = 0usize;
    let mut res = 0.0;
    let mut score = 0.0;
    let mut agree = 0.0;
    for (q, m) in p.q.iter().zip(&p.m) {
        let d = shape.signed_distance(q).abs();
        score += d.min(p.tol);
        if d <= p.tol {
            inl += 1;
            res += d;
            agree += m.dot(&shape.sdf_gradient(q));
        }
    }
    FitResult {
        class,
        shape,
        residual: if inl > 0 {
            res / inl as f64
        } else {
            f64::INFINITY
        },
        inlier_fraction: inl as f64 / n,
        score: score / n,
        normal_agreement: if inl > 0 { agree / inl as f64 } else { -1.0 },
    }
}

pub(crate) fn fit_prepared(class: FitClass, p: &Prepared, opts: &FitOptions) -> Result<FitResult> {
    let shape = match class {
        FitClass::Sphere => fit_sphere(p, opts)?,
        FitClass::Ellipsoid => fit_ellipsoid(p, opts)?,
        FitClass::Box => fit_box(p, opts)?,
        FitClass::Cylinder => fit_cylinder(p, opts)?,
    };
    Ok(evaluate(class, shape, p))
}

/// Maps a canonical-frame fit back to the input frame.
pub(crate) fn to_input_frame(fit: FitResult, p: &Prepared) -> FitResult {
    let pose = p.frame.compose(fit.shape.pose());
    FitResult {
        shape: fit.shape.with_pose(pose),
        ..fit
    }
}

/// Fits one model class to a cloud with normals, in the cloud's units.
pub fn fit_primitive(class: FitClass, cloud: &PointCloud) -> Result<FitResult> {
    fit_primitive_with(class, cloud, &FitOptions::default())
}

pub fn fit_primitive_with(
    class: FitClass,
    cloud: &PointCloud,
    opts: &FitOptions,
) -> Result<FitResult> {
    let p = prepare(cloud, opts)?;
    Ok(to_input_frame(fit_prepared(class, &p, opts)?, &p))
}

/// Lowest score wins; fits within 5% (or an absolute 1e-3) of the best go
/// to the model with fewer parameters.
pub fn select_model(fits: &[FitResult]) -> Option<FitResult> {
    let best = fits.iter().map(|f| f.score).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return fits.first().cloned();
    }
    let slack = (0.05 * best).max(TIE_ABS);
    fits.iter()
        .filter(|f| f.score <= best + slack)
        .min_by(|a, b| {
            a.class
                .parameter_count()
                .cmp(&b.class.parameter_count())
                .then(a.class.cmp(&b.class))
                .then(a.score.total_cmp(&b.score))
        })
        .cloned()
}

/// Absolute tie band of `select_model`, input units.
pub const TIE_ABS: f64 = 1e-3;

impl FitResult {
    pub(crate) fn scaled(
        self,
        scale: f64,
        to_mm: impl Fn(&PrimitiveShape) -> PrimitiveShape,
    ) -> FitResult {
        FitResult {
            shape: to_mm(&self.shape),
            residual: self.residual * scale,
            score: self.score * scale,
            ..self
        }
    }
}
