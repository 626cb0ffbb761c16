//! Parametric objects (ellipsoid "ball", box, elliptic cylinder) with signed
//! distance, closest points, normals, surface sampling and mesh export.

mod ellipse;
mod mesh;
mod sampling;
mod suite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose, UnitVec3};

pub use mesh::TriangleMesh;
pub use sampling::sample_surface;
pub use suite::{
    object_name, NamedObject, ObjectSuite, RotationAxis, SuiteSpec, Variation, SUITE_SCHEMA_VERSION,
};

/// Points within this distance of two box faces (or of a cylinder rim) are in
/// an edge zone where the normal is resolved by the face-priority rule.
pub const EDGE_ZONE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeKind {
    Ball,
    Box,
    Cylinder,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Ball, ShapeKind::Box, ShapeKind::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Ball => "Ball",
            ShapeKind::Box => "Box",
            ShapeKind::Cylinder => "Cylinder",
        }
    }
}

/// Dimensions in millimeters. Ball radii and cylinder cross-section radii are
/// semi-axes; box sides and cylinder height are full lengths. The cylinder
/// axis and the box `l` side run along local z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ShapeParams {
    Ball { rx: f64, ry: f64, rz: f64 },
    Box { w: f64, h: f64, l: f64 },
    Cylinder { rx: f64, ry: f64, h: f64 },
}

impl ShapeParams {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeParams::Ball { .. } => ShapeKind::Ball,
            ShapeParams::Box { .. } => ShapeKind::Box,
            ShapeParams::Cylinder { .. } => ShapeKind::Cylinder,
        }
    }

    pub fn dims(&self) -> [f64; 3] {
        match *self {
            ShapeParams::Ball { rx, ry, rz } => [rx, ry, rz],
            ShapeParams::Box { w, h, l } => [w, h, l],
            ShapeParams::Cylinder { rx, ry, h } => [rx, ry, h],
        }
    }

    /// Same kind with every dimension multiplied per axis.
    pub fn scaled(&self, s: [f64; 3]) -> ShapeParams {
        let d = self.dims();
        let (a, b, c) = (d[0] * s[0], d[1] * s[1], d[2] * s[2]);
        match self {
            ShapeParams::Ball { .. } => ShapeParams::Ball {
                rx: a,
                ry: b,
                rz: c,
            },
            ShapeParams::Box { .. } => ShapeParams::Box { w: a, h: b, l: c },
            ShapeParams::Cylinder { .. } => ShapeParams::Cylinder { rx: a, ry: b, h: c },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims().iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "shape dimensions must be positive: {self:?}"
            )))
        }
    }
}

/// A primitive placed in the base frame by `pose` (object frame to base frame).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct PrimitiveShape {
    params: ShapeParams,
    pose: Pose,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    #[serde(flatten)]
    params: ShapeParams,
    pose: Pose,
}

impl TryFrom<ShapeRepr> for PrimitiveShape {
    type Error = Error;

    fn try_from(r: ShapeRepr) -> Result<Self> {
        PrimitiveShape::new(r.params, r.pose)
    }
}

impl From<PrimitiveShape> for ShapeRepr {
    fn from(s: PrimitiveShape) -> Self {
        ShapeRepr {
            params: s.params,
            pose: s.pose,
        }
    }
}

impl PrimitiveShape {
    pub fn new(params: ShapeParams, pose: Pose) -> Result<Self> {
        params.validate()?;
        Ok(PrimitiveShape { params, pose })
    }

    pub fn ball(rx: f64, ry: f64, rz: f64) -> Result<Self> {
        Self::new(ShapeParams::Ball { rx, ry, rz }, Pose::identity())
    }

    pub fn sphere(r: f64) -> Result<Self> {
        Self::ball(r, r, r)
    }

    pub fn cuboid(w: f64, h: f64, l: f64) -> Result<Self> {
        Self::new(ShapeParams::Box { w, h, l }, Pose::identity())
    }

    pub fn cylinder(rx: f64, ry: f64, h: f64) -> Result<Self> {
        Self::new(ShapeParams::Cylinder { rx, ry, h }, Pose::identity())
    }

    pub fn with_pose(self, pose: Pose) -> Self {
        PrimitiveShape { pose, ..self }
    }

    pub fn params(&self) -> &ShapeParams {
        &self.params
    }

    pub fn kind(&self) -> ShapeKind {
        self.params.kind()
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    /// Radius of the smallest origin-centered sphere (object frame) enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self.params {
            ShapeParams::Ball { rx, ry, rz } => rx.max(ry).max(rz),
            ShapeParams::Box { w, h, l } => 0.5 * (w * w + h * h + l * l).sqrt(),
            ShapeParams::Cylinder { rx, ry, h } => (rx.max(ry).powi(2) + 0.25 * h * h).sqrt(),
        }
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        match self.params {
            ShapeParams::Ball { rx, ry, rz } => 4.0 / 3.0 * PI * rx * ry * rz,
            ShapeParams::Box { w, h, l } => w * h * l,
            ShapeParams::Cylinder { rx, ry, h } => PI * rx * ry * h,
        }
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        let q = self.pose.inverse_transform_point(p);
        let c = self.closest_local(&q);
        let d = (q - c).norm();
        if self.inside_local(&q) {
            -d
        } else {
            d
        }
    }

    /// Closest surface point to `p`, in the base frame.
    pub fn closest_point(&self, p: &Point3) -> Point3 {
        let q = self.pose.inverse_transform_point(p);
        self.pose.transform_point(&self.closest_local(&q))
    }

    /// Outward unit normal at the surface feature closest to `p`. At box edges
    /// the face with the largest |coordinate| / half-extent wins; on cylinders
    /// the same ratio decides between the side wall and a cap.
    pub fn surface_normal(&self, p: &Point3) -> UnitVec3 {
        let q = self.pose.inverse_transform_point(p);
        let n = self.normal_local(&q);
        self.pose.transform_unit(&n)
    }

    /// Normalized gradient of the signed distance at `p`: the direction from
    /// the closest surface point to `p` (outside) or from `p` to it (inside).
    /// Falls back to `surface_normal` on the surface itself.
    pub fn sdf_gradient(&self, p: &Point3) -> UnitVec3 {
        let q = self.pose.inverse_transform_point(p);
        let c = self.closest_local(&q);
        let diff = q - c;
        let d = diff.norm();
        let scale = self.bounding_radius();
        let local = if d > 1e-9 * scale {
            let g = if self.inside_local(&q) { -diff } else { diff };
            UnitVec3::new_normalize(g)
        } else {
            self.normal_local(&q)
        };
        self.pose.transform_unit(&local)
    }

    /// Whether `p` lies within [`EDGE_ZONE`] of a box edge or cylinder rim,
    /// where the signed distance has no gradient.
    pub fn in_edge_zone(&self, p: &Point3) -> bool {
        let q = self.pose.inverse_transform_point(p);
        match self.params {
            ShapeParams::Ball { .. } => false,
            ShapeParams::Box { w, h, l } => {
                let half = [0.5 * w, 0.5 * h, 0.5 * l];
                (0..3)
                    .filter(|&i| (q[i].abs() - half[i]).abs() < EDGE_ZONE + 1e-3)
                    .count()
                    >= 2
            }
            ShapeParams::Cylinder { rx, ry, h } => {
                let (cx, cy) = ellipse_closest(rx, ry, q.x, q.y);
                let radial = ((q.x - cx).powi(2) + (q.y - cy).powi(2)).sqrt();
                radial < EDGE_ZONE + 1e-3 && (q.z.abs() - 0.5 * h).abs() < EDGE_ZONE + 1e-3
            }
        }
    }

    /// Central finite-difference gradient of the signed distance, normalized.
    pub fn fd_gradient(&self, p: &Point3, h: f64) -> Option<UnitVec3> {
        let mut g = Point3::zeros();
        for i in 0..3 {
            let mut e = Point3::zeros();
            e[i] = h;
            g[i] = (self.signed_distance(&(p + e)) - self.signed_distance(&(p - e))) / (2.0 * h);
        }
        crate::geometry::unit(g)
    }

    fn inside_local(&self, q: &Point3) -> bool {
        match self.params {
            ShapeParams::Ball { rx, ry, rz } => {
                (q.x / rx).powi(2) + (q.y / ry).powi(2) + (q.z / rz).powi(2) < 1.0
            }
            ShapeParams::Box { w, h, l } => {
                q.x.abs() < 0.5 * w && q.y.abs() < 0.5 * h && q.z.abs() < 0.5 * l
            }
            ShapeParams::Cylinder { rx, ry, h } => {
                (q.x / rx).powi(2) + (q.y / ry).powi(2) < 1.0 && q.z.abs() < 0.5 * h
            }
        }
    }

    fn closest_local(&self, q: &Point3) -> Point3 {
        match self.params {
            ShapeParams::Ball { rx, ry, rz } => {
                if rx == ry && ry == rz {
                    let n = q.norm();
                    if n < 1e-300 {
                        return Point3::new(0.0, 0.0, rz);
                    }
                    return q * (rx / n);
                }
                Point3::from(ellipse::closest_point([rx, ry, rz], [q.x, q.y, q.z]))
            }
            ShapeParams::Box { w, h, l } => {
                let half = Point3::new(0.5 * w, 0.5 * h, 0.5 * l);
                if self.inside_local(q) {
                    // project onto the nearest face; ties go to the lowest axis
                    let mut best = 0;
                    let mut gap = f64::INFINITY;
                    for i in 0..3 {
                        let g = half[i] - q[i].abs();
                        if g < gap {
                            gap = g;
                            best = i;
                        }
                    }
                    let mut c = *q;
                    c[best] = half[best].copysign(if q[best] == 0.0 { 1.0 } else { q[best] });
                    c
                } else {
                    Point3::new(
                        q.x.clamp(-half.x, half.x),
                        q.y.clamp(-half.y, half.y),
                        q.z.clamp(-half.z, half.z),
                    )
                }
            }
            ShapeParams::Cylinder { rx, ry, h } => {
                let hz = 0.5 * h;
                let rim = ellipse_closest(rx, ry, q.x, q.y);
                let in_disc = (q.x / rx).powi(2) + (q.y / ry).powi(2) < 1.0;
                let radial = ((q.x - rim.0).powi(2) + (q.y - rim.1).powi(2)).sqrt();
                let axial = q.z.abs() - hz;
                let cap_z = hz.copysign(if q.z == 0.0 { 1.0 } else { q.z });
                if in_disc && axial < 0.0 {
                    // inside: nearer of side wall and cap
                    if radial <= -axial {
                        Point3::new(rim.0, rim.1, q.z)
                    } else {
                        Point3::new(q.x, q.y, cap_z)
                    }
                } else if in_disc {
                    Point3::new(q.x, q.y, cap_z)
                } else if axial <= 0.0 {
                    Point3::new(rim.0, rim.1, q.z)
                } else {
                    Point3::new(rim.0, rim.1, cap_z)
                }
            }
        }
    }

    fn normal_local(&self, q: &Point3) -> UnitVec3 {
        match self.params {
            ShapeParams::Ball { rx, ry, rz } => {
                let c = self.closest_local(q);
                UnitVec3::new_normalize(Point3::new(
                    c.x / (rx * rx),
                    c.y / (ry * ry),
                    c.z / (rz * rz),
                ))
            }
            ShapeParams::Box { w, h, l } => {
                let half = [0.5 * w, 0.5 * h, 0.5 * l];
                let gaps = [
                    half[0] - q.x.abs(),
                    half[1] - q.y.abs(),
                    half[2] - q.z.abs(),
                ];
                let inside = gaps.iter().all(|g| *g > 0.0);
                let near_two = gaps.iter().filter(|g| **g < EDGE_ZONE).count() >= 2;
                let best = if inside && !near_two {
                    argmin(&gaps)
                } else {
                    // face-priority: largest |coordinate| / half-extent
                    argmax(&[
                        q.x.abs() / half[0],
                        q.y.abs() / half[1],
                        q.z.abs() / half[2],
                    ])
                };
                let mut n = Point3::zeros();
                n[best] = if q[best] < 0.0 { -1.0 } else { 1.0 };
                UnitVec3::new_unchecked(n)
            }
            ShapeParams::Cylinder { rx, ry, h } => {
                let hz = 0.5 * h;
                let (cx, cy) = ellipse_closest(rx, ry, q.x, q.y);
                let in_disc = (q.x / rx).powi(2) + (q.y / ry).powi(2) < 1.0;
                let dr = ((q.x - cx).powi(2) + (q.y - cy).powi(2)).sqrt();
                let g_side = if in_disc { -dr } else { dr };
                let g_cap = q.z.abs() - hz;
                let cap = if g_side < 0.0 && g_cap < 0.0 {
                    if -g_side < EDGE_ZONE && -g_cap < EDGE_ZONE {
                        ratio_prefers_cap(q, rx, ry, hz)
                    } else {
                        g_cap > g_side
                    }
                } else if g_side >= 0.0 && g_cap >= 0.0 {
                    ratio_prefers_cap(q, rx, ry, hz)
                } else {
                    g_cap >= 0.0
                };
                if cap {
                    let s = if q.z < 0.0 { -1.0 } else { 1.0 };
                    UnitVec3::new_unchecked(Point3::new(0.0, 0.0, s))
                } else {
                    UnitVec3::new_normalize(Point3::new(cx / (rx * rx), cy / (ry * ry), 0.0))
                }
            }
        }
    }
}

fn ratio_prefers_cap(q: &Point3, rx: f64, ry: f64, hz: f64) -> bool {
    let radial = ((q.x / rx).powi(2) + (q.y / ry).powi(2)).sqrt();
    q.z.abs() / hz >= radial
}

fn argmin(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

fn argmax(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn ellipse_closest(rx: f64, ry: f64, x: f64, y: f64) -> (f64, f64) {
    if rx == ry {
        let n = (x * x + y * y).sqrt();
        if n < 1e-300 {
            return (rx, 0.0);
        }
        return (x * rx / n, y * rx / n);
    }
    let c = ellipse::closest_point([rx, ry], [x, y]);
    (c[0], c[1])
}
