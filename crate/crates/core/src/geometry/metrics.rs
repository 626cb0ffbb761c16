use std::collections::HashSet;

use super::{Point3, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

fn directed_mean(from: &[Point3], to: &SpatialIndex) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.nearest(p).map(|(_, d)| d).unwrap_or(0.0))
        .sum();
    sum / from.len() as f64
}

/// Symmetric mean of unsquared nearest-neighbor distances:
/// `0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|)`, in the clouds' units.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = SpatialIndex::new(a.points());
    let ib = SpatialIndex::new(b.points());
    let ab = directed_mean(a.points(), &ib);
    let ba = directed_mean(b.points(), &ia);
    Ok(0.5 * (ab + ba))
}

/// Root-mean-square distance of the points from their centroid.
pub fn rms_radius(cloud: &PointCloud) -> Result<f64> {
    let c = cloud.centroid().ok_or(Error::EmptyCloud)?;
    let ms = cloud
        .points()
        .iter()
        .map(|p| (p - c).norm_squared())
        .sum::<f64>()
        / cloud.len() as f64;
    Ok(ms.sqrt())
}

/// Chamfer distance made dimensionless by `lambda * rms_radius(reference)`.
pub fn normalized_chamfer(
    a: &PointCloud,
    b: &PointCloud,
    reference: &PointCloud,
    lambda: f64,
) -> Result<f64> {
    let scale = lambda * rms_radius(reference)?;
    if !(scale > 0.0) {
        return Err(Error::DegenerateCloud(
            "reference cloud has zero extent".into(),
        ));
    }
    Ok(chamfer_distance(a, b)? / scale)
}

/// Distance from `p` to its nearest measured point (linear scan).
pub fn coverage_distance(p: &Point3, measured: &PointCloud) -> Result<f64> {
    measured
        .points()
        .iter()
        .map(|q| (p - q).norm())
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyCloud)
}

/// Coverage distance for every query point, answered by one spatial index
/// over `measured`.
pub fn coverage_distances(queries: &[Point3], measured: &PointCloud) -> Result<Vec<f64>> {
    if measured.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = SpatialIndex::new(measured.points());
    Ok(queries
        .iter()
        .map(|q| index.nearest(q).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .collect())
}

/// Occupied-voxel count times `resolution^3`; voxel index is
/// `floor(coordinate / resolution)` per axis.
pub fn voxel_volume(cloud: &PointCloud, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "voxel resolution must be positive, got {resolution}"
        )));
    }
    let occupied: HashSet<[i64; 3]> = cloud
        .points()
        .iter()
        .map(|p| {
            [
                (p.x / resolution).floor() as i64,
                (p.y / resolution).floor() as i64,
                (p.z / resolution).floor() as i64,
            ]
        })
        .collect();
    Ok(occupied.len() as f64 * resolution.powi(3))
}
