use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Pose, UnitVec3};

pub const HAND_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Tip,
    Nail,
    Pad,
    Palm,
}

impl Region {
    /// Required (rows, cols) of each array.
    pub fn layout(self) -> (usize, usize) {
        match self {
            Region::Tip => (3, 3),
            Region::Nail => (12, 8),
            Region::Pad => (10, 8),
            Region::Palm => (8, 14),
        }
    }
}

/// A rectangular taxel grid. Grid point `(r, c)` sits at
/// `((r - (rows-1)/2) * pitch, (c - (cols-1)/2) * pitch, 0)` in the mount
/// frame, which is placed on its link by `mount`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxelArray {
    pub region: Region,
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub mount: Pose,
}

impl TaxelArray {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in the link frame, row-major.
    pub fn local_points(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.len());
        let r0 = 0.5 * (self.rows as f64 - 1.0);
        let c0 = 0.5 * (self.cols as f64 - 1.0);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let p = Point3::new(
                    (r as f64 - r0) * self.pitch,
                    (c as f64 - c0) * self.pitch,
                    0.0,
                );
                out.push(self.mount.transform_point(&p));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if (self.rows, self.cols) != self.region.layout() {
            return Err(Error::InvalidParameter(format!(
                "{:?} array must be {:?}, got {}x{}",
                self.region,
                self.region.layout(),
                self.rows,
                self.cols
            )));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{:?} pitch must be positive",
                self.region
            )));
        }
        Ok(())
    }
}

/// One finger: a curl joint at `base` driving two links.
///
/// The base frame (in hand coordinates) has x across the finger, y along
/// the straight finger and z toward the palm side, which is the direction
/// the finger curls into. Link 1 leaves the base at angle `theta` from y
/// toward z; link 2 is at `coupling * theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub name: String,
    pub base: Pose,
    pub link_lengths: [f64; 2],
    pub theta_max: f64,
    pub coupling: f64,
    pub thumb: bool,
}

/// Versioned description of the hand geometry; lengths in millimeters.
///
/// Hand frame: origin at the palm center, z along the palm normal toward
/// the object, y toward the fingers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandDescription {
    pub schema_version: u32,
    pub palm_size: [f64; 2],
    /// Radius of the shallow spherical cup of the palm; `None` for a flat palm.
    pub palm_cup_radius: Option<f64>,
    pub palm: TaxelArray,
    /// Per-finger arrays, mounted in the frame of the link that carries them.
    pub pad: TaxelArray,
    pub nail: TaxelArray,
    pub tip: TaxelArray,
    pub fingers: Vec<FingerSpec>,
}

impl Default for HandDescription {
    fn default() -> Self {
        let (l1, l2) = (35.0, 30.0);
        let cup = 120.0;
        let cup_z = |x: f64, y: f64| (x * x + y * y) / (2.0 * cup);
        let mut fingers = Vec::new();
        for (i, name) in ["index", "middle", "ring", "little"].iter().enumerate() {
            let x = -22.5 + 15.0 * i as f64;
            fingers.push(FingerSpec {
                name: name.to_string(),
                base: Pose::from_translation(Point3::new(x, 50.0, cup_z(x, 50.0))),
                link_lengths: [l1, l2],
                theta_max: std::f64::consts::FRAC_PI_2,
                coupling: 2.0,
                thumb: false,
            });
        }
        // thumb: pointing out to -x and slightly forward, fixed abduction
        let a = 15f64.to_radians();
        let u = Point3::new(-a.cos(), a.sin(), 0.0);
        let z = Point3::z();
        let across = u.cross(&z);
        let base = Pose::new(
            Matrix3::from_columns(&[across, u, z]),
            Point3::new(-30.0, -15.0, cup_z(-30.0, -15.0)),
        )
        .expect("orthonormal thumb frame");
        fingers.insert(
            0,
            FingerSpec {
                name: "thumb".into(),
                base,
                link_lengths: [l1, l2],
                theta_max: std::f64::consts::FRAC_PI_2,
                coupling: 2.0,
                thumb: true,
            },
        );
        // end face of link 2: grid normal along the link
        let tip_mount = Pose::new(
            Matrix3::from_columns(&[Point3::x(), -Point3::z(), Point3::y()]),
            Point3::new(0.0, l2, 0.0),
        )
        .expect("orthonormal tip frame");
        HandDescription {
            schema_version: HAND_SCHEMA_VERSION,
            palm_size: [60.0, 100.0],
            palm_cup_radius: Some(cup),
            palm: TaxelArray {
                region: Region::Palm,
                rows: 8,
                cols: 14,
                pitch: 6.0,
                mount: Pose::identity(),
            },
            pad: TaxelArray {
                region: Region::Pad,
                rows: 10,
                cols: 8,
                pitch: 4.0,
                mount: Pose::from_translation(Point3::new(0.0, 0.5 * l1, 0.0)),
            },
            nail: TaxelArray {
                region: Region::Nail,
                rows: 12,
                cols: 8,
                pitch: 3.0,
                mount: Pose::from_translation(Point3::new(0.0, 0.5 * l2, 0.0)),
            },
            tip: TaxelArray {
                region: Region::Tip,
                rows: 3,
                cols: 3,
                pitch: 4.0,
                mount: tip_mount,
            },
            fingers,
        }
    }
}

impl HandDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Head {
            schema_version: Option<u32>,
        }
        let head: Head = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("hand description: {e}")))?;
        if head.schema_version != Some(HAND_SCHEMA_VERSION) {
            return Err(Error::SchemaMismatch {
                path: "hand description".into(),
                expected: HAND_SCHEMA_VERSION,
                found: format!("{:?}", head.schema_version),
            });
        }
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("hand description: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hand description serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Palm,
    /// (finger index, link index 0 or 1)
    Finger(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Taxel {
    pub region: Region,
    pub link: Link,
    /// Position in the frame of `link`.
    pub local: Point3,
}

/// Hand pose in the base frame plus one curl angle (rad) per finger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub pose: Pose,
    pub curls: Vec<f64>,
}

impl GripperState {
    pub fn open(pose: Pose, fingers: usize) -> Self {
        GripperState {
            pose,
            curls: vec![0.0; fingers],
        }
    }

    /// Palm normal (the approach direction) in the base frame.
    pub fn palm_normal(&self) -> UnitVec3 {
        self.pose.axis(2)
    }
}

/// Immutable kinematic hand model with a flattened taxel table.
#[derive(Clone, Debug, PartialEq)]
pub struct GripperModel {
    desc: HandDescription,
    taxels: Vec<Taxel>,
    /// Index ranges into `taxels`: palm first, then one range per finger.
    palm_range: std::ops::Range<usize>,
    finger_ranges: Vec<std::ops::Range<usize>>,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel::new(HandDescription::default()).expect("default hand is valid")
    }
}

impl GripperModel {
    pub fn new(desc: HandDescription) -> Result<Self> {
        for arr in [&desc.palm, &desc.pad, &desc.nail, &desc.tip] {
            arr.validate()?;
        }
        let regions = [
            (&desc.palm, Region::Palm),
            (&desc.pad, Region::Pad),
            (&desc.nail, Region::Nail),
            (&desc.tip, Region::Tip),
        ];
        if let Some((arr, want)) = regions.iter().find(|(a, r)| a.region != *r) {
            return Err(Error::InvalidParameter(format!(
                "array in the {want:?} slot is tagged {:?}",
                arr.region
            )));
        }
        if let Some(r) = desc.palm_cup_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(
                    "palm cup radius must be positive".into(),
                ));
            }
        }
        for f in &desc.fingers {
            if !(f.link_lengths.iter().all(|l| *l > 0.0) && f.theta_max > 0.0 && f.coupling >= 0.0)
            {
                return Err(Error::InvalidParameter(format!(
                    "finger '{}' is malformed",
                    f.name
                )));
            }
        }

        let mut taxels = Vec::new();
        for p in desc.palm.local_points() {
            let z = desc
                .palm_cup_radius
                .map_or(0.0, |r| (p.x * p.x + p.y * p.y) / (2.0 * r));
            taxels.push(Taxel {
                region: Region::Palm,
                link: Link::Palm,
                local: Point3::new(p.x, p.y, p.z + z),
            });
        }
        let palm_range = 0..taxels.len();
        let mut finger_ranges = Vec::new();
        for f in 0..desc.fingers.len() {
            let start = taxels.len();
            for (arr, link) in [(&desc.pad, 0), (&desc.nail, 1), (&desc.tip, 1)] {
                for p in arr.local_points() {
                    taxels.push(Taxel {
                        region: arr.region,
                        link: Link::Finger(f, link),
                        local: p,
                    });
                }
            }
            finger_ranges.push(start..taxels.len());
        }
        Ok(GripperModel {
            desc,
            taxels,
            palm_range,
            finger_ranges,
        })
    }

    pub fn description(&self) -> &HandDescription {
        &self.desc
    }

    pub fn taxels(&self) -> &[Taxel] {
        &self.taxels
    }

    pub fn taxel_count(&self) -> usize {
        self.taxels.len()
    }

    pub fn finger_count(&self) -> usize {
        self.desc.fingers.len()
    }

    pub fn palm_taxels(&self) -> std::ops::Range<usize> {
        self.palm_range.clone()
    }

    pub fn finger_taxels(&self, finger: usize) -> std::ops::Range<usize> {
        self.finger_ranges[finger].clone()
    }

    pub fn theta_max(&self, finger: usize) -> f64 {
        self.desc.fingers[finger].theta_max
    }

    pub fn open_state(&self, pose: Pose) -> GripperState {
        GripperState::open(pose, self.finger_count())
    }

    pub fn validate_state(&self, state: &GripperState) -> Result<()> {
        if state.curls.len() != self.finger_count() {
            return Err(Error::InvalidParameter(format!(
                "{} curls for {} fingers",
                state.curls.len(),
                self.finger_count()
            )));
        }
        for (i, c) in state.curls.iter().enumerate() {
            if !(*c >= 0.0 && *c <= self.theta_max(i) + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "curl {i} = {c} outside its joint range"
                )));
            }
        }
        Ok(())
    }

    /// Frames (hand coordinates) of a finger's two links at curl `theta`.
    pub fn link_frames(&self, finger: usize, theta: f64) -> [Pose; 2] {
        let f = &self.desc.fingers[finger];
        let rot = |angle: f64| Rotation3::from_axis_angle(&Point3::x_axis(), angle);
        // rotating the base frame about its x axis turns y toward z
        let link1 = Pose::from_parts(f.base.rotation() * rot(theta), f.base.translation());
        let joint = link1.transform_point(&Point3::new(0.0, f.link_lengths[0], 0.0));
        let link2 = Pose::from_parts(f.base.rotation() * rot(f.coupling * theta), joint);
        [link1, link2]
    }

    /// Taxel positions in the hand frame for the given curls.
    pub fn taxel_positions_hand(&self, curls: &[f64]) -> Vec<Point3> {
        let frames: Vec<[Pose; 2]> = (0..self.finger_count())
            .map(|f| self.link_frames(f, curls[f]))
            .collect();
        self.taxels
            .iter()
            .map(|t| match t.link {
                Link::Palm => t.local,
                Link::Finger(f, l) => frames[f][l].transform_point(&t.local),
            })
            .collect()
    }

    /// Base-frame positions of one finger's taxels at curl `theta`.
    pub(crate) fn finger_positions(&self, pose: &Pose, finger: usize, theta: f64) -> Vec<Point3> {
        let frames = self.link_frames(finger, theta);
        self.finger_ranges[finger]
            .clone()
            .map(|i| {
                let t = &self.taxels[i];
                let Link::Finger(_, l) = t.link else {
                    unreachable!()
                };
                pose.transform_point(&frames[l].transform_point(&t.local))
            })
            .collect()
    }

    /// Thickness of the open hand along the palm normal: the largest taxel
    /// height above the palm center plane.
    pub fn depth(&self) -> f64 {
        self.taxel_positions_hand(&vec![0.0; self.finger_count()])
            .iter()
            .map(|p| p.z)
            .fold(0.0, f64::max)
    }
}

/// One point per taxel in the base frame; deterministic.
pub fn taxel_positions(model: &GripperModel, state: &GripperState) -> PointCloud {
    let pts = model
        .taxel_positions_hand(&state.curls)
        .iter()
        .map(|p| state.pose.transform_point(p))
        .collect();
    PointCloud::new(pts)
}
