use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PrimitiveShape, ShapeParams};
use crate::error::{Error, Result};
use crate::geometry::ply::fmt_real;
use crate::geometry::Point3;

/// Indexed triangle mesh with counter-clockwise (outward) winding.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Largest allowed distance between the mesh and the analytic surface at the
/// default resolution, in millimeters.
pub const DEFAULT_MAX_DEVIATION: f64 = 0.25;

/// Coarsest resolution: 4 segments around, which gives 8 triangles for a ball.
pub const MIN_SEGMENTS: usize = 4;

impl PrimitiveShape {
    /// Segment count whose chord deviation stays under `max_deviation` mm.
    pub fn segments_for_deviation(&self, max_deviation: f64) -> usize {
        let (a, b) = match *self.params() {
            ShapeParams::Ball { rx, ry, rz } => (rx.max(ry).max(rz), rx.min(ry).min(rz)),
            ShapeParams::Box { .. } => return MIN_SEGMENTS,
            ShapeParams::Cylinder { rx, ry, .. } => (rx.max(ry), rx.min(ry)),
        };
        // largest radius of curvature of the cross-sections
        let r = a * a / b;
        // a quad deviates by up to one sagitta per direction
        let half_angle = (1.0 - 0.5 * max_deviation / r).clamp(-1.0, 1.0).acos();
        let s = (PI / half_angle).ceil() as usize;
        (s + s % 2).max(MIN_SEGMENTS)
    }

    pub fn default_mesh(&self) -> TriangleMesh {
        self.to_mesh(self.segments_for_deviation(DEFAULT_MAX_DEVIATION))
            .expect("default resolution is valid")
    }

    /// Triangulates the surface with `segments` divisions around each curved
    /// direction. Boxes always produce 12 triangles. Vertices lie exactly on
    /// the analytic surface.
    pub fn to_mesh(&self, segments: usize) -> Result<TriangleMesh> {
        if segments < MIN_SEGMENTS {
            return Err(Error::InvalidParameter(format!(
                "mesh needs at least {MIN_SEGMENTS} segments, got {segments}"
            )));
        }
        let mut m = match *self.params() {
            ShapeParams::Ball { rx, ry, rz } => ellipsoid_mesh(rx, ry, rz, segments),
            ShapeParams::Box { w, h, l } => box_mesh(0.5 * w, 0.5 * h, 0.5 * l),
            ShapeParams::Cylinder { rx, ry, h } => cylinder_mesh(rx, ry, 0.5 * h, segments),
        };
        for v in &mut m.vertices {
            *v = self.pose().transform_point(v);
        }
        Ok(m)
    }
}

fn ellipsoid_mesh(rx: f64, ry: f64, rz: f64, segments: usize) -> TriangleMesh {
    let lat = (segments / 2).max(2);
    let mut vertices = vec![Point3::new(0.0, 0.0, rz)];
    for i in 1..lat {
        let th = PI * i as f64 / lat as f64;
        for j in 0..segments {
            let ph = 2.0 * PI * j as f64 / segments as f64;
            vertices.push(Point3::new(
                rx * th.sin() * ph.cos(),
                ry * th.sin() * ph.sin(),
                rz * th.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -rz));
    let bottom = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
    let mut triangles = Vec::new();
    for j in 0..segments {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..lat - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (
                ring(i, j),
                ring(i, j + 1),
                ring(i + 1, j),
                ring(i + 1, j + 1),
            );
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..segments {
        triangles.push([bottom, ring(lat - 1, j + 1), ring(lat - 1, j)]);
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

fn box_mesh(hx: f64, hy: f64, hz: f64) -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 3],
        [0, 3, 1], // -z
        [4, 5, 7],
        [4, 7, 6], // +z
        [0, 1, 5],
        [0, 5, 4], // -y
        [2, 6, 7],
        [2, 7, 3], // +y
        [0, 4, 6],
        [0, 6, 2], // -x
        [1, 3, 7],
        [1, 7, 5], // +x
    ];
    TriangleMesh {
        vertices,
        triangles,
    }
}

fn cylinder_mesh(rx: f64, ry: f64, hz: f64, segments: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for z in [hz, -hz] {
        for j in 0..segments {
            let t = 2.0 * PI * j as f64 / segments as f64;
            vertices.push(Point3::new(rx * t.cos(), ry * t.sin(), z));
        }
    }
    let top_c = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, hz));
    let bot_c = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -hz));
    let top = |j: usize| (j % segments) as u32;
    let bot = |j: usize| (segments + j % segments) as u32;
    let mut triangles = Vec::new();
    for j in 0..segments {
        triangles.push([top_c, top(j), top(j + 1)]);
        triangles.push([bot_c, bot(j + 1), bot(j)]);
        triangles.push([top(j), bot(j), bot(j + 1)]);
        triangles.push([top(j), bot(j + 1), top(j + 1)]);
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

impl TriangleMesh {
    fn corners(&self, t: &[u32; 3]) -> [Point3; 3] {
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Every directed edge appears once and its reverse appears once.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Enclosed volume by the divergence theorem (positive when outward-wound).
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Generalized winding number test: inside when the triangles subtend
    /// more than half of the full solid angle around `p`.
    pub fn contains(&self, p: &Point3) -> bool {
        let total: f64 = self
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let (a, b, c) = (a - p, b - p, c - p);
                let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
                let num = a.dot(&b.cross(&c));
                let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
                2.0 * num.atan2(den)
            })
            .sum();
        total / (4.0 * PI) > 0.5
    }

    /// Unsigned distance from `p` to the nearest triangle.
    pub fn distance(&self, p: &Point3) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                (closest_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_stl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(84 + 50 * self.triangles.len());
        let mut header = [0u8; 80];
        let tag = b"binary STL";
        header[..tag.len()].copy_from_slice(tag);
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let [a, b, c] = self.corners(t);
            let n = (b - a)
                .cross(&(c - a))
                .try_normalize(1e-300)
                .unwrap_or_else(Point3::zeros);
            for v in [n, a, b, c] {
                for k in 0..3 {
                    out.extend_from_slice(&(v[k] as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }

    pub fn to_ply_string(&self) -> String {
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", self.vertices.len());
        out.push_str("property double x\nproperty double y\nproperty double z\n");
        let _ = writeln!(out, "element face {}", self.triangles.len());
        out.push_str("property list uchar uint vertex_indices\nend_header\n");
        for v in &self.vertices {
            let _ = writeln!(out, "{} {} {}", fmt_real(v.x), fmt_real(v.y), fmt_real(v.z));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn write_stl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_stl_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn write_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ply_string()).map_err(|e| Error::io(path, e))
    }
}

/// Closest point on triangle `abc` to `p` (Ericson's region tests).
fn closest_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::primitives::sample_surface;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn suite_shapes() -> Vec<PrimitiveShape> {
        crate::primitives::ObjectSuite::table_one()
            .objects
            .iter()
            .map(|o| o.shape)
            .collect()
    }

    #[test]
    fn box_is_twelve_triangles() {
        let b = PrimitiveShape::cuboid(60.0, 60.0, 60.0).unwrap();
        let m = b.to_mesh(MIN_SEGMENTS).unwrap();
        assert_eq!(m.triangles.len(), 12);
        assert!(m.is_watertight());
        assert!((m.volume() - 216_000.0).abs() < 1e-6);
    }

    #[test]
    fn minimum_resolution_ball_has_eight_triangles() {
        let m = PrimitiveShape::sphere(30.0)
            .unwrap()
            .to_mesh(MIN_SEGMENTS)
            .unwrap();
        assert_eq!(m.triangles.len(), 8);
        assert!(m.is_watertight());
        assert!(PrimitiveShape::sphere(30.0).unwrap().to_mesh(3).is_err());
    }

    #[test]
    fn sphere_vertices_on_radius() {
        let m = PrimitiveShape::sphere(30.0).unwrap().default_mesh();
        for v in &m.vertices {
            assert!((v.norm() - 30.0).abs() < 1e-6);
        }
    }

    #[test]
    fn suite_meshes_are_closed_and_close() {
        for s in suite_shapes() {
            let m = s.default_mesh();
            assert!(m.is_watertight(), "{s:?}");
            let rel = (m.volume() - s.volume()) / s.volume();
            assert!(rel <= 1e-9 && rel > -0.02, "{s:?}: {rel}");
            // mesh to surface: triangle interiors
            for t in &m.triangles {
                let [a, b, c] = m.corners(t);
                for (u, v) in [(1.0 / 3.0, 1.0 / 3.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
                    let p = a + (b - a) * u + (c - a) * v;
                    assert!(
                        s.signed_distance(&p).abs() < 0.5,
                        "{:?} {}",
                        s.params(),
                        s.signed_distance(&p)
                    );
                }
            }
            // surface to mesh
            let cloud = sample_surface(&s, 300, 5).unwrap();
            for p in cloud.points() {
                assert!(m.distance(p) < 0.5);
            }
        }
    }

    #[test]
    fn sign_agrees_with_point_in_mesh() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in suite_shapes() {
            let m = s.to_mesh(s.segments_for_deviation(0.4)).unwrap();
            let r = s.bounding_radius() + 5.0;
            let c = s.pose().translation();
            let mut checked = 0;
            while checked < 2_000 {
                let p = c + Point3::new(
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                );
                let d = s.signed_distance(&p);
                if d.abs() < 0.5 {
                    continue;
                }
                assert_eq!(d < 0.0, m.contains(&p), "{s:?} at {p:?}");
                checked += 1;
            }
        }
    }

    #[test]
    fn posed_mesh_and_exports() {
        let pose =
            Pose::from_axis_angle(&Point3::x_axis(), 0.5).translated(&Point3::new(1.0, 2.0, 3.0));
        let s = PrimitiveShape::cylinder(25.0, 37.5, 80.0)
            .unwrap()
            .with_pose(pose);
        let m = s.to_mesh(16).unwrap();
        assert_eq!(m.triangles.len(), 64);
        let stl = m.to_stl_bytes();
        assert_eq!(stl.len(), 84 + 50 * 64);
        assert_eq!(u32::from_le_bytes(stl[80..84].try_into().unwrap()), 64);
        let ply = m.to_ply_string();
        assert!(ply.contains("element face 64\n"));
        assert_eq!(ply.lines().count(), 9 + m.vertices.len() + 64);
    }
}
