//! Shape completion: from a sparse, normal-bearing contact cloud to a dense
//! predicted surface. The reference completer fits primitives and resamples
//! the winner; an external learned model can be plugged in through a file
//! exchange directory.

mod external;
mod fit;
mod lm;

use std::collections::HashSet;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

pub use external::{ExchangeParams, ExternalCompleter};
pub use fit::{
    fit_primitive, fit_primitive_with, select_model, FitClass, FitOptions, FitResult, TIE_ABS,
};

use crate::error::{Error, Result};
use crate::geometry::{normalize_cloud, NormalizationParams, Point3, PointCloud, Pose};
use crate::primitives::{sample_surface, PrimitiveShape, ShapeParams};
use crate::seed::derive_seed;

/// A normalized contact cloud with normals, plus what is needed to undo the
/// normalization and to check the output for reused measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct CompleterInput {
    pub cloud: PointCloud,
    pub params: NormalizationParams,
    /// The measurements in the base frame.
    pub measured: PointCloud,
}

impl CompleterInput {
    pub fn new(measured: &PointCloud, lambda: f64) -> Result<Self> {
        if measured.normals().is_none() {
            return Err(Error::InvalidCloud("completion input needs normals".into()));
        }
        let (cloud, params) = normalize_cloud(measured, lambda)?;
        Ok(CompleterInput {
            cloud,
            params,
            measured: measured.clone(),
        })
    }

    /// The normalized cloud must be centered with norm spread `1/lambda`.
    pub fn check(&self) -> Result<()> {
        let pts = self.cloud.points();
        if pts.len() < 8 {
            return Err(Error::TooFewPoints {
                needed: 8,
                got: pts.len(),
            });
        }
        if self.cloud.normals().is_none() {
            return Err(Error::InvalidCloud("completion input needs normals".into()));
        }
        let n = pts.len() as f64;
        let mean: Point3 = pts.iter().sum::<Point3>() / n;
        let norms: Vec<f64> = pts.iter().map(|p| (p - mean).norm()).collect();
        let mn = norms.iter().sum::<f64>() / n;
        let sd = (norms.iter().map(|r| (r - mn).powi(2)).sum::<f64>() / n).sqrt();
        let target = 1.0 / self.params.lambda;
        if mean.norm() > 1e-6 * target.max(1.0) || (sd - target).abs() > 1e-6 * target {
            return Err(Error::ContractViolation(format!(
                "input is not normalized: mean {:.3e}, spread {sd} vs {target}",
                mean.norm()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub class: FitClass,
    /// `None` when the fit itself failed.
    pub score: Option<f64>,
    pub inlier_fraction: Option<f64>,
    /// Why the fit was not eligible, if it was not.
    pub rejected: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub classes: Vec<ClassDiagnostics>,
    /// No class was acceptable and the sphere prior was used.
    pub fallback: bool,
}

/// The current predicted full shape, in the base frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub cloud: PointCloud,
    /// The selected fit in millimeters, when the reference completer made one.
    pub fit: Option<FitResult>,
    pub diagnostics: FitDiagnostics,
    pub generation: u64,
}

pub trait Completer {
    fn complete(&self, input: &CompleterInput, n_out: usize, seed: u64) -> Result<BeliefState>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceCompleter {
    pub fit: FitOptions,
    pub classes: Vec<FitClass>,
    /// Minimum inlier fraction of an acceptable fit.
    pub min_inliers: f64,
}

impl Default for ReferenceCompleter {
    fn default() -> Self {
        ReferenceCompleter {
            fit: FitOptions::default(),
            classes: FitClass::ALL.to_vec(),
            min_inliers: 0.5,
        }
    }
}

fn point_key(p: &Point3) -> [u64; 3] {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

/// Draws `n` surface points of `shape` (normalized frame), skipping any that
/// coincide exactly with a forbidden point, and maps them to the base frame.
fn novel_samples(
    shape: &PrimitiveShape,
    n: usize,
    seed: u64,
    params: &NormalizationParams,
    forbidden: &HashSet<[u64; 3]>,
) -> Result<PointCloud> {
    let mut pts = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut round = 0u64;
    while pts.len() < n {
        let s = if round == 0 {
            seed
        } else {
            derive_seed(seed, &["resample", &round.to_string()])
        };
        let batch = sample_surface(shape, n, s)?;
        let bn = batch.normals().expect("surface samples carry normals");
        for (p, nrm) in batch.points().iter().zip(bn) {
            if pts.len() == n {
                break;
            }
            let q = params.denormalize_point(p);
            if forbidden.contains(&point_key(&q)) || forbidden.contains(&point_key(p)) {
                continue;
            }
            pts.push(q);
            normals.push(*nrm);
        }
        round += 1;
        if round > 64 {
            return Err(Error::ContractViolation(
                "could not draw novel points".into(),
            ));
        }
    }
    PointCloud::from_parts(pts, Some(normals), None)
}

/// Shape in the normalized frame mapped to millimeters.
pub fn denormalize_shape(shape: &PrimitiveShape, params: &NormalizationParams) -> PrimitiveShape {
    let s = params.scale();
    let pose = Pose::from_parts(
        *shape.pose().rotation(),
        params.denormalize_point(&shape.pose().translation()),
    );
    PrimitiveShape::new(shape.params().scaled([s; 3]), pose)
        .expect("scaled dimensions stay positive")
}

/// Number of earliest contacts that fix the orientation of symmetric fits.
const ANCHOR_POINTS: usize = 64;

/// Relative difference below which two semi-axes count as equal.
const ROUND_TOL: f64 = 0.02;

/// Frame of the earliest contacts (by timestamp, then index). It stays put
/// while later contacts are appended, and it moves rigidly with the input.
fn anchor_frame(cloud: &PointCloud, opts: &FitOptions) -> Option<Rotation3<f64>> {
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    if let Some(ts) = cloud.timestamps() {
        idx.sort_by_key(|&i| (ts[i], i));
    }
    idx.truncate(ANCHOR_POINTS);
    fit::prepare(&cloud.select(&idx), opts)
        .ok()
        .map(|p| *p.frame.rotation())
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= ROUND_TOL * a.max(b)
}

/// Picks, among the orientations under which `shape` looks the same, the one
/// closest to `anchor`. Refits of one object on growing data then sample the
/// surface at matching places instead of at arbitrarily spun ones.
fn settle_orientation(shape: &PrimitiveShape, anchor: &Rotation3<f64>) -> PrimitiveShape {
    let r = *shape.pose().rotation().matrix();
    let a = anchor.matrix();
    let free_axis = match *shape.params() {
        ShapeParams::Ball { rx, ry, rz } if near(rx, ry) && near(ry, rz) => None,
        ShapeParams::Ball { rx, ry, rz } => {
            if near(rx, ry) {
                Some(2)
            } else if near(ry, rz) {
                Some(0)
            } else if near(rx, rz) {
                Some(1)
            } else {
                Some(3)
            }
        }
        ShapeParams::Cylinder { rx, ry, .. } if near(rx, ry) => Some(2),
        _ => Some(3),
    };
    let base = match free_axis {
        None => *a,
        Some(k) if k < 3 => {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let ek = r.column(k).into_owned();
            // the anchor axis farthest from the symmetry axis sets the roll
            let ei = (0..3)
                .map(|c| {
                    let v = a.column(c).into_owned();
                    v - ek * ek.dot(&v)
                })
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .expect("three axes")
                .normalize();
            let mut cols = [Point3::zeros(); 3];
            cols[k] = ek;
            cols[i] = ei;
            cols[j] = ek.cross(&ei);
            Matrix3::from_columns(&cols)
        }
        Some(_) => r,
    };
    // Relabeling local axes, with the dimensions permuted to match, and
    // flipping axes in pairs leave every primitive unchanged. Of those
    // labelings take the rotation closest to the anchor.
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let dims = shape.params().dims();
    let mut best: Option<(f64, Matrix3<f64>, [usize; 3])> = None;
    for perm in PERMS {
        // a cylinder's axis has to stay local z
        if matches!(shape.params(), ShapeParams::Cylinder { .. }) && perm[2] != 2 {
            continue;
        }
        for signs in 0..8u8 {
            let f = |c: usize| if signs & (1 << c) == 0 { 1.0 } else { -1.0 };
            let cols: Vec<Point3> = (0..3).map(|c| base.column(perm[c]) * f(c)).collect();
            let m = Matrix3::from_columns(&cols);
            if m.determinant() < 0.0 {
                continue;
            }
            let score = (a.transpose() * m).trace();
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, m, perm));
            }
        }
    }
    let (_, m, perm) = best.expect("the identity labeling is proper");
    let d = [dims[perm[0]], dims[perm[1]], dims[perm[2]]];
    let params = match *shape.params() {
        ShapeParams::Ball { .. } => ShapeParams::Ball { rx: d[0], ry: d[1], rz: d[2] },
        ShapeParams::Box { .. } => ShapeParams::Box { w: d[0], h: d[1], l: d[2] },
        ShapeParams::Cylinder { .. } => ShapeParams::Cylinder { rx: d[0], ry: d[1], h: d[2] },
    };
    let rot = Rotation3::from_matrix_unchecked(m);
    PrimitiveShape::new(params, Pose::from_parts(rot, shape.pose().translation()))
        .expect("permuted dimensions stay valid")
}

impl ReferenceCompleter {
    /// All eligible fits and the diagnostics of every class, normalized frame.
    fn candidates(
        &self,
        input: &CompleterInput,
    ) -> Result<(Vec<FitResult>, FitDiagnostics, fit::Prepared)> {
        let prep = fit::prepare(&input.cloud, &self.fit)?;
        let mut diag = FitDiagnostics::default();
        let mut ok = Vec::new();
        for &class in &self.classes {
            match fit::fit_prepared(class, &prep, &self.fit) {
                Ok(f) => {
                    let reason = if f.inlier_fraction < self.min_inliers {
                        Some(format!("inlier fraction {:.3}", f.inlier_fraction))
                    } else if !(f.normal_agreement > 0.0) {
                        Some("body on the anti-normal side".to_string())
                    } else if f.shape.bounding_radius() > self.fit.size_cap * prep.extent {
                        Some("implausibly large".to_string())
                    } else {
                        None
                    };
                    diag.classes.push(ClassDiagnostics {
                        class,
                        score: Some(f.score),
                        inlier_fraction: Some(f.inlier_fraction),
                        rejected: reason.clone(),
                    });
                    if reason.is_none() {
                        ok.push(f);
                    }
                }
                Err(e) => diag.classes.push(ClassDiagnostics {
                    class,
                    score: None,
                    inlier_fraction: None,
                    rejected: Some(e.to_string()),
                }),
            }
        }
        Ok((ok, diag, prep))
    }

    /// Sphere prior on the body side of the contacts: radius is the mean
    /// spread of the contacts, center one radius behind their centroid
    /// against the mean normal.
    fn fallback(prep: &fit::Prepared) -> PrimitiveShape {
        let n = prep.q.len() as f64;
        let c: Point3 = prep.q.iter().sum::<Point3>() / n;
        let r = (prep.q.iter().map(|q| (q - c).norm()).sum::<f64>() / n).max(1e-6);
        let mean_n: Point3 = prep.m.iter().sum::<Point3>() / n;
        let center = if mean_n.norm() > 1e-9 {
            c - mean_n.normalize() * r
        } else {
            c
        };
        PrimitiveShape::new(
            ShapeParams::Ball {
                rx: r,
                ry: r,
                rz: r,
            },
            Pose::from_translation(center),
        )
        .expect("positive radius")
    }
}

impl Completer for ReferenceCompleter {
    fn complete(&self, input: &CompleterInput, n_out: usize, seed: u64) -> Result<BeliefState> {
        input.check()?;
        if n_out == 0 {
            return Err(Error::InvalidParameter("n_out must be positive".into()));
        }
        let (fits, mut diag, prep) = self.candidates(input)?;
        let (local, chosen) = match select_model(&fits) {
            Some(f) => (f.shape, Some(f)),
            None => {
                diag.fallback = true;
                (Self::fallback(&prep), None)
            }
        };
        let shape_n = local.with_pose(prep.frame.compose(local.pose()));
        let shape_n = match anchor_frame(&input.cloud, &self.fit) {
            Some(anchor) => settle_orientation(&shape_n, &anchor),
            None => shape_n,
        };
        let mut forbidden: HashSet<[u64; 3]> =
            input.measured.points().iter().map(point_key).collect();
        forbidden.extend(input.cloud.points().iter().map(point_key));
        let cloud = novel_samples(&shape_n, n_out, seed, &input.params, &forbidden)?;
        let scale = input.params.scale();
        let fit = chosen.map(|f| {
            let f = FitResult {
                shape: shape_n,
                ..f
            };
            f.scaled(scale, |s| denormalize_shape(s, &input.params))
        });
        Ok(BeliefState {
            cloud,
            fit,
            diagnostics: diag,
            generation: 0,
        })
    }
}

/// Exact set intersection of two clouds' points is empty.
pub fn disjoint(a: &PointCloud, b: &PointCloud) -> bool {
    let keys: HashSet<[u64; 3]> = a.points().iter().map(point_key).collect();
    !b.points().iter().any(|p| keys.contains(&point_key(p)))
}

/// Completer that samples a known shape; useful as an upper bound and in tests.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCompleter {
    pub shape: PrimitiveShape,
}

impl Completer for OracleCompleter {
    fn complete(&self, input: &CompleterInput, n_out: usize, seed: u64) -> Result<BeliefState> {
        let forbidden: HashSet<[u64; 3]> = input.measured.points().iter().map(point_key).collect();
        let cloud = novel_samples(
            &self.shape,
            n_out,
            seed,
            &NormalizationParams::identity(),
            &forbidden,
        )?;
        Ok(BeliefState {
            cloud,
            fit: None,
            diagnostics: FitDiagnostics::default(),
            generation: 0,
        })
    }
}
