use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PrimitiveShape, ShapeKind, ShapeParams};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variation {
    Small,
    Big,
    /// Deformed aspect ratio plus a 45 degree orientation offset.
    #[serde(rename = "D&R")]
    DeformedRotated,
}

impl Variation {
    pub const ALL: [Variation; 3] = [Variation::Small, Variation::Big, Variation::DeformedRotated];

    pub fn name(self) -> &'static str {
        match self {
            Variation::Small => "Small",
            Variation::Big => "Big",
            Variation::DeformedRotated => "D&R",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationAxis {
    X,
    Y,
    Z,
}

impl RotationAxis {
    pub fn vector(self) -> Point3 {
        match self {
            RotationAxis::X => Point3::x(),
            RotationAxis::Y => Point3::y(),
            RotationAxis::Z => Point3::z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedObject {
    pub name: String,
    pub category: ShapeKind,
    pub variation: Variation,
    pub shape: PrimitiveShape,
}

/// How the D&R orientation offset is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub rotation_axis: RotationAxis,
    pub rotation_deg: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        // About z the D&R ball and box (both rotationally symmetric about
        // their long axis) would be unchanged, so tilt about x instead.
        SuiteSpec {
            rotation_axis: RotationAxis::X,
            rotation_deg: 45.0,
        }
    }
}

/// The nine evaluation objects: three categories in Small, Big and D&R form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSuite {
    pub schema_version: u32,
    pub spec: SuiteSpec,
    pub objects: Vec<NamedObject>,
}

impl ObjectSuite {
    pub fn table_one() -> Self {
        Self::table_one_with(SuiteSpec::default())
    }

    pub fn table_one_with(spec: SuiteSpec) -> Self {
        let tilt = Pose::from_axis_angle(
            &nalgebra::Unit::new_normalize(spec.rotation_axis.vector()),
            spec.rotation_deg.to_radians(),
        );
        let rows: [(ShapeKind, [ShapeParams; 3]); 3] = [
            (
                ShapeKind::Ball,
                [
                    ShapeParams::Ball {
                        rx: 30.0,
                        ry: 30.0,
                        rz: 30.0,
                    },
                    ShapeParams::Ball {
                        rx: 45.0,
                        ry: 45.0,
                        rz: 45.0,
                    },
                    ShapeParams::Ball {
                        rx: 30.0,
                        ry: 30.0,
                        rz: 45.0,
                    },
                ],
            ),
            (
                ShapeKind::Box,
                [
                    ShapeParams::Box {
                        w: 60.0,
                        h: 60.0,
                        l: 60.0,
                    },
                    ShapeParams::Box {
                        w: 90.0,
                        h: 90.0,
                        l: 90.0,
                    },
                    ShapeParams::Box {
                        w: 60.0,
                        h: 60.0,
                        l: 90.0,
                    },
                ],
            ),
            (
                ShapeKind::Cylinder,
                [
                    ShapeParams::Cylinder {
                        rx: 25.0,
                        ry: 25.0,
                        h: 80.0,
                    },
                    ShapeParams::Cylinder {
                        rx: 37.5,
                        ry: 37.5,
                        h: 120.0,
                    },
                    ShapeParams::Cylinder {
                        rx: 25.0,
                        ry: 37.5,
                        h: 80.0,
                    },
                ],
            ),
        ];
        let mut objects = Vec::new();
        for (kind, params) in rows {
            for (variation, p) in Variation::ALL.into_iter().zip(params) {
                let pose = if variation == Variation::DeformedRotated {
                    tilt
                } else {
                    Pose::identity()
                };
                objects.push(NamedObject {
                    name: object_name(kind, variation),
                    category: kind,
                    variation,
                    shape: PrimitiveShape::new(p, pose).expect("table dimensions are positive"),
                });
            }
        }
        ObjectSuite {
            schema_version: SUITE_SCHEMA_VERSION,
            spec,
            objects,
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Head {
            schema_version: Option<u32>,
        }
        let head: Head = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("suite definition: {e}")))?;
        if head.schema_version != Some(SUITE_SCHEMA_VERSION) {
            return Err(Error::SchemaMismatch {
                path: "suite".into(),
                expected: SUITE_SCHEMA_VERSION,
                found: format!("{:?}", head.schema_version),
            });
        }
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("suite definition: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::SchemaMismatch {
                expected, found, ..
            } => Error::SchemaMismatch {
                path: path.to_path_buf(),
                expected,
                found,
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn object_name(kind: ShapeKind, variation: Variation) -> String {
    let v = match variation {
        Variation::Small => "small",
        Variation::Big => "big",
        Variation::DeformedRotated => "dr",
    };
    format!("{}_{v}", kind.name().to_lowercase())
}
