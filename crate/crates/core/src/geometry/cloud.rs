use serde::{Deserialize, Serialize};

use super::{Point3, Pose, UnitVec3};
use crate::error::{Error, Result};

/// Ordered points with optional per-point unit normals and contact timestamps.
///
/// When present, `normals` and `timestamps` have the same length as `points`
/// and timestamps are non-decreasing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CloudRepr", into = "CloudRepr")]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<UnitVec3>>,
    timestamps: Option<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct CloudRepr {
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normals: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<u64>>,
}

impl TryFrom<CloudRepr> for PointCloud {
    type Error = Error;

    fn try_from(r: CloudRepr) -> Result<Self> {
        let normals = r.normals.map(|ns| {
            ns.into_iter()
                .map(|n| UnitVec3::new_unchecked(Point3::from(n)))
                .collect()
        });
        let cloud = PointCloud::new(r.points.into_iter().map(Point3::from).collect());
        let cloud = match normals {
            Some(n) => cloud.with_normals_tol(n, 1e-6)?,
            None => cloud,
        };
        match r.timestamps {
            Some(t) => cloud.with_timestamps(t),
            None => Ok(cloud),
        }
    }
}

impl From<PointCloud> for CloudRepr {
    fn from(c: PointCloud) -> Self {
        CloudRepr {
            points: c.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            normals: c
                .normals
                .map(|ns| ns.iter().map(|n| [n.x, n.y, n.z]).collect()),
            timestamps: c.timestamps,
        }
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            normals: None,
            timestamps: None,
        }
    }

    pub fn from_parts(
        points: Vec<Point3>,
        normals: Option<Vec<UnitVec3>>,
        timestamps: Option<Vec<u64>>,
    ) -> Result<Self> {
        let cloud = PointCloud::new(points);
        let cloud = match normals {
            Some(n) => cloud.with_normals(n)?,
            None => cloud,
        };
        match timestamps {
            Some(t) => cloud.with_timestamps(t),
            None => Ok(cloud),
        }
    }

    pub fn with_normals(self, normals: Vec<UnitVec3>) -> Result<Self> {
        self.with_normals_tol(normals, 1e-9)
    }

    /// Like `with_normals` with a looser unit-norm tolerance, for normals that
    /// went through a fixed-precision text format.
    pub(crate) fn with_normals_tol(mut self, normals: Vec<UnitVec3>, tol: f64) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(bad) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= tol))
        {
            return Err(Error::InvalidCloud(format!(
                "normal {bad} is not unit length"
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<u64>) -> Result<Self> {
        if timestamps.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} timestamps for {} points",
                timestamps.len(),
                self.points.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidCloud("timestamps decrease".into()));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    /// Same points with every timestamp set to `stamp`.
    pub fn stamped(self, stamp: u64) -> Self {
        let n = self.points.len();
        PointCloud {
            timestamps: Some(vec![stamp; n]),
            ..self
        }
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[UnitVec3]> {
        self.normals.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[u64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Point3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Appends `other`. An empty cloud adopts the attributes of `other`;
    /// otherwise both must carry the same attributes and timestamps must not
    /// go backwards.
    pub fn append(&mut self, other: &PointCloud) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if self.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        if self.normals.is_some() != other.normals.is_some()
            || self.timestamps.is_some() != other.timestamps.is_some()
        {
            return Err(Error::InvalidCloud(
                "cannot append clouds with different attributes".into(),
            ));
        }
        if let (Some(a), Some(b)) = (&self.timestamps, &other.timestamps) {
            if let (Some(last), Some(first)) = (a.last(), b.first()) {
                if first < last {
                    return Err(Error::InvalidCloud(
                        "appended timestamps go backwards".into(),
                    ));
                }
            }
        }
        self.points.extend_from_slice(&other.points);
        if let (Some(a), Some(b)) = (&mut self.normals, &other.normals) {
            a.extend_from_slice(b);
        }
        if let (Some(a), Some(b)) = (&mut self.timestamps, &other.timestamps) {
            a.extend_from_slice(b);
        }
        Ok(())
    }

    /// Keeps the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Replaces point positions, keeping the other attributes.
    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            normals: self.normals.clone(),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Maps points by `p -> R p + t` and normals by `n -> R n`.
    pub fn transform(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| pose.transform_point(p))
                .collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.transform_unit(n)).collect()),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Flips every normal.
    pub fn flip_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| -*n).collect()),
            timestamps: self.timestamps.clone(),
        }
    }
}

/// Applies `pose` to every point and normal; timestamps are preserved.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    cloud.transform(pose)
}
