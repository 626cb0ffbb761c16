//! Core 3D types: points, rigid poses and point clouds, plus the metrics and
//! normalization used throughout the pipeline. All lengths are millimeters.

mod cloud;
mod kdtree;
mod metrics;
mod normalize;
mod normals;
pub mod ply;
mod pose;

pub use cloud::{transform_cloud, PointCloud};
pub use kdtree::SpatialIndex;
pub use metrics::{
    chamfer_distance, coverage_distance, coverage_distances, normalized_chamfer, rms_radius,
    voxel_volume,
};
pub use normalize::{denormalize_cloud, normalize_cloud, NormalizationParams};
pub use normals::estimate_normals;
pub use pose::Pose;

/// A position in millimeters.
pub type Point3 = nalgebra::Vector3<f64>;
/// A direction with unit L2 norm.
pub type UnitVec3 = nalgebra::Unit<nalgebra::Vector3<f64>>;

/// Builds a unit vector, rejecting zero or non-finite input.
pub fn unit(v: Point3) -> Option<UnitVec3> {
    let n = v.norm();
    if n.is_finite() && n > 1e-300 {
        Some(UnitVec3::new_unchecked(v / n))
    } else {
        None
    }
}

/// Any unit vector orthogonal to `n`, chosen deterministically.
pub fn any_orthogonal(n: &UnitVec3) -> UnitVec3 {
    let a = n.into_inner();
    let helper = if a.x.abs() <= a.y.abs() && a.x.abs() <= a.z.abs() {
        Point3::x()
    } else if a.y.abs() <= a.z.abs() {
        Point3::y()
    } else {
        Point3::z()
    };
    UnitVec3::new_normalize(a.cross(&helper))
}
