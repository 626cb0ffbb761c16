use nalgebra::{Matrix3, SymmetricEigen};

use super::{Point3, PointCloud, SpatialIndex, UnitVec3};
use crate::error::{Error, Result};

/// Per-point normals from the smallest principal axis of the covariance of
/// each point's `k` nearest neighbors (plus the point itself), oriented away
/// from the cloud centroid.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!(
            "k must be at least 3, got {k}"
        )));
    }
    if cloud.len() < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: cloud.len(),
        });
    }
    let pts = cloud.points();
    let index = SpatialIndex::new(pts);
    let centroid = cloud.centroid().ok_or(Error::EmptyCloud)?;
    let spread = pts
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);

    let mut normals = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let nbrs = index.k_nearest(p, k + 1);
        let mean: Point3 = nbrs.iter().map(|&(j, _)| pts[j]).sum::<Point3>() / nbrs.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(j, _) in &nbrs {
            let d = pts[j] - mean;
            cov += d * d.transpose();
        }
        if cov.trace() <= (1e-12 * spread.max(1e-300)).powi(2) {
            return Err(Error::DegenerateNeighborhood { index: i });
        }
        let eig = SymmetricEigen::new(cov);
        let min = eig.eigenvalues.imin();
        let mut n: Point3 = eig.eigenvectors.column(min).into_owned();
        let outward = p - centroid;
        let dot = n.dot(&outward);
        if dot.abs() > 1e-12 * spread {
            if dot < 0.0 {
                n = -n;
            }
        } else {
            // on the centroid plane: make the largest component positive
            let m = n.iamax();
            if n[m] < 0.0 {
                n = -n;
            }
        }
        normals.push(UnitVec3::new_normalize(n));
    }
    PointCloud::from_parts(
        pts.to_vec(),
        Some(normals),
        cloud.timestamps().map(|t| t.to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_normals_are_axis_aligned() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(Point3::new(i as f64, j as f64 * 1.3, 0.0));
            }
        }
        let c = estimate_normals(&PointCloud::new(pts), 8).unwrap();
        for n in c.normals().unwrap() {
            assert!((n.z.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_neighborhood_errors() {
        let mut pts = vec![Point3::new(1.0, 1.0, 1.0); 10];
        pts.extend((0..10).map(|i| Point3::new(50.0 + i as f64, 0.0, 3.0 * i as f64)));
        assert!(matches!(
            estimate_normals(&PointCloud::new(pts), 4),
            Err(Error::DegenerateNeighborhood { index: 0 })
        ));
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Point3::zeros(), Point3::x(), Point3::y()];
        assert!(matches!(
            estimate_normals(&PointCloud::new(pts), 3),
            Err(Error::TooFewPoints { .. })
        ));
    }
}
