use serde::{Deserialize, Serialize};

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Per-sample normalization: center on the mean, then divide by `lambda`
/// times the standard deviation of the centered points' L2 norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub lambda: f64,
    pub mean: Point3,
    pub sigma: f64,
}

impl NormalizationParams {
    pub fn identity() -> Self {
        NormalizationParams {
            lambda: 1.0,
            mean: Point3::zeros(),
            sigma: 1.0,
        }
    }

    /// Length of one normalized unit in millimeters.
    pub fn scale(&self) -> f64 {
        self.lambda * self.sigma
    }

    pub fn normalize_point(&self, p: &Point3) -> Point3 {
        (p - self.mean) / self.scale()
    }

    pub fn denormalize_point(&self, p: &Point3) -> Point3 {
        p * self.scale() + self.mean
    }
}

pub fn normalize_cloud(
    cloud: &PointCloud,
    lambda: f64,
) -> Result<(PointCloud, NormalizationParams)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let pts = cloud.points();
    if pts.len() < 2 {
        return Err(Error::DegenerateCloud(format!(
            "need at least 2 points, got {}",
            pts.len()
        )));
    }
    if pts.iter().all(|p| *p == pts[0]) {
        return Err(Error::DegenerateCloud("all points coincide".into()));
    }
    let n = pts.len() as f64;
    let mean: Point3 = pts.iter().sum::<Point3>() / n;
    let norms: Vec<f64> = pts.iter().map(|p| (p - mean).norm()).collect();
    let mean_norm = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|r| (r - mean_norm).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let extent = norms.iter().cloned().fold(0.0, f64::max);
    if !(sigma > 1e-12 * extent) {
        return Err(Error::NormalizationUndefined);
    }
    let params = NormalizationParams {
        lambda,
        mean,
        sigma,
    };
    Ok((cloud.map_points(|p| params.normalize_point(p)), params))
}

pub fn denormalize_cloud(cloud: &PointCloud, params: &NormalizationParams) -> PointCloud {
    cloud.map_points(|p| params.denormalize_point(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_sigma(c: &PointCloud) -> f64 {
        let n = c.len() as f64;
        let m: Point3 = c.points().iter().sum::<Point3>() / n;
        let r: Vec<f64> = c.points().iter().map(|p| (p - m).norm()).collect();
        let mr = r.iter().sum::<f64>() / n;
        (r.iter().map(|x| (x - mr).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn symmetric_pair_is_undefined() {
        let c = PointCloud::new(vec![
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ]);
        assert!(matches!(
            normalize_cloud(&c, 1.0),
            Err(Error::NormalizationUndefined)
        ));
    }

    #[test]
    fn degenerate_inputs() {
        let one = PointCloud::new(vec![Point3::zeros()]);
        assert!(matches!(
            normalize_cloud(&one, 1.0),
            Err(Error::DegenerateCloud(_))
        ));
        let same = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 4]);
        assert!(matches!(
            normalize_cloud(&same, 1.0),
            Err(Error::DegenerateCloud(_))
        ));
        let ok = PointCloud::new(vec![Point3::zeros(), Point3::x(), Point3::y() * 3.0]);
        assert!(normalize_cloud(&ok, 0.0).is_err());
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let c = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-3.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(2.0, -2.0, 0.0),
        ]);
        let (once, _) = normalize_cloud(&c, 2.0).unwrap();
        let (twice, p2) = normalize_cloud(&once, 2.0).unwrap();
        assert!((p2.sigma - 0.5).abs() < 1e-12);
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!((norm_sigma(&once) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_params_and_shift() {
        let c = PointCloud::new(vec![
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(-1.0, 0.5, 0.0),
        ]);
        assert_eq!(denormalize_cloud(&c, &NormalizationParams::identity()), c);
        let params = NormalizationParams {
            lambda: 2.0,
            mean: Point3::new(10.0, 0.0, 0.0),
            sigma: 3.0,
        };
        let origin = PointCloud::new(vec![Point3::zeros(), Point3::new(1.0, 0.0, 0.0)]);
        let out = denormalize_cloud(&origin, &params);
        assert_eq!(out.points()[0], Point3::new(10.0, 0.0, 0.0));
        assert_eq!(out.points()[1], Point3::new(16.0, 0.0, 0.0));
    }
}
