//! Synthetic training pairs: a random approach-and-grasp on a primitive gives
//! the partial tactile cloud, a dense surface sample gives the target. Also
//! the augmentations applied to those pairs.

use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files;
use crate::geometry::{normalize_cloud, ply, unit, NormalizationParams, Point3, PointCloud, Pose};
use crate::gripper::{
    approach_until_contact, close_fingers_until_contact, ContactParams, GripperModel,
};
use crate::primitives::{sample_surface, NamedObject, PrimitiveShape};
use crate::seed::{derive_seed, sha256_hex};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Settings of the contact sequence that produces one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_target: usize,
    pub lambda: f64,
    /// Initial clearance between the bounding sphere and the hand, mm.
    pub standoff: f64,
    /// Largest sideways offset of the approach line from the object center, mm.
    pub lateral_jitter: f64,
    pub max_attempts: usize,
    pub contact: ContactParams,
    /// Points the palm away from the object; only useful to exercise the
    /// failure path.
    pub palm_facing_away: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_target: 2048,
            lambda: 1.0,
            standoff: 10.0,
            lateral_jitter: 10.0,
            max_attempts: 10,
            contact: ContactParams::default(),
            palm_facing_away: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    pub shape: PrimitiveShape,
    /// Tactile contacts with normals and timestamps, base frame.
    pub input: PointCloud,
    /// Dense surface sample, base frame.
    pub target: PointCloud,
    /// Normalization of `input`; absent when it is undefined (too few points).
    pub normalization: Option<NormalizationParams>,
    pub truncation: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationAugment {
    None,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub truncations: Vec<f64>,
    pub noise_sigma: f64,
    pub rotation: RotationAugment,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            truncations: (0..10).map(|k| k as f64 / 10.0).collect(),
            noise_sigma: 1.0,
            rotation: RotationAugment::Uniform,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.truncations.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(Error::InvalidParameter(format!(
                "truncation {f} outside [0, 1)"
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn input_normalization(input: &PointCloud, lambda: f64) -> Option<NormalizationParams> {
    normalize_cloud(input, lambda).ok().map(|(_, p)| p)
}

/// Random hand placement facing the object, approach, power grasp, contact
/// extraction. A missed approach re-draws the placement.
pub fn generate_sample(
    model: &GripperModel,
    shape: &PrimitiveShape,
    config: &GenerationConfig,
    seed: u64,
) -> Result<DatasetSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = shape.pose().translation();
    let reach = shape.bounding_radius() + model.depth() + config.standoff;
    for _ in 0..config.max_attempts {
        let dir = random_unit(&mut rng);
        let roll = rng.random_range(0.0..std::f64::consts::TAU);
        let jx = rng.random_range(-1.0..=1.0) * config.lateral_jitter;
        let jy = rng.random_range(-1.0..=1.0) * config.lateral_jitter;
        let facing = if config.palm_facing_away { dir } else { -dir };
        let Some(base) = Pose::from_z_and_x(
            &facing,
            &crate::geometry::any_orthogonal(&facing),
            Point3::zeros(),
        ) else {
            continue;
        };
        let rolled = Pose::from_axis_angle(&facing, roll).compose(&base);
        let origin =
            center + dir.into_inner() * reach + rolled.transform_vector(&Point3::new(jx, jy, 0.0));
        let pose = Pose::from_parts(*rolled.rotation(), origin);
        let start = model.open_state(pose);
        let travel = reach + shape.bounding_radius();
        let approach = approach_until_contact(
            model,
            &start,
            &start.palm_normal(),
            shape,
            &config.contact,
            travel,
            0,
        );
        let (touch, first) = match approach {
            Ok(v) => v,
            Err(Error::NoContact { .. }) => continue,
            Err(e) => return Err(e),
        };
        let (_, grasp) = close_fingers_until_contact(model, &touch, shape, &config.contact, 1)?;
        let mut input = first.points.clone();
        input.append(&grasp.points)?;
        let target = sample_surface(shape, config.n_target, derive_seed(seed, &["target"]))?;
        return Ok(DatasetSample {
            id: String::new(),
            shape: shape.clone(),
            normalization: input_normalization(&input, config.lambda),
            input,
            target,
            truncation: 0.0,
            seed,
        });
    }
    Err(Error::GenerationFailed {
        attempts: config.max_attempts,
    })
}

fn random_unit(rng: &mut impl Rng) -> crate::geometry::UnitVec3 {
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = unit(v) {
            return u;
        }
    }
}

/// Drops the latest `floor(fraction * M)` points by timestamp (ties broken
/// by index); survivors keep their order.
pub fn truncate_points(cloud: &PointCloud, fraction: f64) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "truncation {fraction} outside [0, 1)"
        )));
    }
    let stamps = cloud.timestamps().ok_or(Error::MissingTimestamps)?;
    let m = cloud.len();
    let drop = (fraction * m as f64).floor() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (stamps[i], i));
    let mut keep = order[..m - drop].to_vec();
    keep.sort_unstable();
    Ok(cloud.select(&keep))
}

/// I.i.d. Gaussian perturbation of every coordinate; normals are untouched.
pub fn add_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<Point3> = (0..cloud.len())
        .map(|_| {
            Point3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            )
        })
        .collect();
    let points = cloud
        .points()
        .iter()
        .zip(&offsets)
        .map(|(p, o)| p + o)
        .collect();
    PointCloud::from_parts(
        points,
        cloud.normals().map(<[_]>::to_vec),
        cloud.timestamps().map(<[_]>::to_vec),
    )
}

/// A rotation drawn from the Haar measure on SO(3) (normalized Gaussian
/// quaternion).
pub fn haar_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-9 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        }
    }
}

/// Applies one random rotation about the base origin to input, target and
/// shape alike.
pub fn random_rotation(sample: &DatasetSample, seed: u64) -> DatasetSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Pose::from_parts(haar_rotation(&mut rng), Point3::zeros());
    let mut out = sample.clone();
    out.input = sample.input.transform(&r);
    out.target = sample.target.transform(&r);
    out.shape = sample.shape.with_pose(r.compose(sample.shape.pose()));
    out.normalization = sample.normalization.map(|n| NormalizationParams {
        mean: r.transform_point(&n.mean),
        ..n
    });
    out
}

/// What to build: every object gets `meshes_per_object` randomly stretched
/// variants, each grasped `per_shape` times, each grasp stored at every
/// truncation level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub meshes_per_object: usize,
    pub per_shape: usize,
    /// Per-axis stretch factors are drawn from this range.
    pub scale_range: (f64, f64),
    pub augment: AugmentationSpec,
    pub generation: GenerationConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            meshes_per_object: 1,
            per_shape: 20,
            scale_range: (0.7, 1.3),
            augment: AugmentationSpec::default(),
            generation: GenerationConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub object: String,
    pub mesh: usize,
    pub grasp: usize,
    pub truncation: f64,
    pub seed: u64,
    pub shape: PrimitiveShape,
    pub input_points: usize,
    pub normalization: Option<NormalizationParams>,
    pub input_file: String,
    pub target_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub config: DatasetConfig,
    pub objects: usize,
    pub meshes: usize,
    pub samples: usize,
    /// Noise and rotation are applied when samples are loaded, not stored.
    pub dynamic_augmentations: Vec<String>,
    /// SHA-256 over every sample file in manifest order.
    pub content_sha256: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: DatasetManifest = files::read_json(path)?;
        if m.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                path: path.to_path_buf(),
                expected: DATASET_SCHEMA_VERSION,
                found: m.schema_version.to_string(),
            });
        }
        Ok(m)
    }
}

/// Randomly stretched copy of `shape`, factors per axis.
pub fn stretched_variant(
    shape: &PrimitiveShape,
    range: (f64, f64),
    seed: u64,
) -> Result<PrimitiveShape> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidParameter(format!(
            "bad scale range {range:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = [1.0; 3];
    for v in &mut s {
        *v = if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        };
    }
    PrimitiveShape::new(shape.params().scaled(s), *shape.pose())
}

/// Generates every sample and writes `<id>_input.ply`, `<id>_target.ply` and
/// `manifest.json` (last) under `dir`.
pub fn build_dataset(
    model: &GripperModel,
    objects: &[NamedObject],
    config: &DatasetConfig,
    dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    config.augment.validate()?;
    files::create_dir(dir)?;
    let mut entries = Vec::new();
    let mut digest = Vec::new();
    for obj in objects {
        for mesh in 0..config.meshes_per_object {
            let mesh_label = mesh.to_string();
            let variant = stretched_variant(
                &obj.shape,
                config.scale_range,
                derive_seed(config.seed, &[&obj.name, "mesh", &mesh_label]),
            )?;
            for grasp in 0..config.per_shape {
                let seed = derive_seed(
                    config.seed,
                    &[&obj.name, "mesh", &mesh_label, "grasp", &grasp.to_string()],
                );
                let base = generate_sample(model, &variant, &config.generation, seed)?;
                let target_text = ply::to_string(&base.target);
                for (t, &fraction) in config.augment.truncations.iter().enumerate() {
                    let id = format!("{}_m{mesh:03}_g{grasp:03}_t{t:02}", obj.name);
                    let input = truncate_points(&base.input, fraction)?;
                    let input_file = format!("{id}_input.ply");
                    let target_file = format!("{id}_target.ply");
                    let input_text = ply::to_string(&input);
                    files::write_atomic(&dir.join(&input_file), input_text.as_bytes())?;
                    files::write_atomic(&dir.join(&target_file), target_text.as_bytes())?;
                    digest.extend_from_slice(input_text.as_bytes());
                    digest.extend_from_slice(target_text.as_bytes());
                    entries.push(ManifestEntry {
                        id,
                        object: obj.name.clone(),
                        mesh,
                        grasp,
                        truncation: fraction,
                        seed,
                        shape: variant.clone(),
                        input_points: input.len(),
                        normalization: input_normalization(&input, config.generation.lambda),
                        input_file,
                        target_file,
                    });
                }
            }
        }
    }
    let mut dynamic = Vec::new();
    if config.augment.noise_sigma > 0.0 {
        dynamic.push(format!(
            "gaussian_noise(sigma={})",
            config.augment.noise_sigma
        ));
    }
    if config.augment.rotation == RotationAugment::Uniform {
        dynamic.push("uniform_rotation".to_string());
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        config: config.clone(),
        objects: objects.len(),
        meshes: objects.len() * config.meshes_per_object,
        samples: entries.len(),
        dynamic_augmentations: dynamic,
        content_sha256: sha256_hex(&digest),
        entries,
    };
    files::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads one stored sample.
pub fn load_sample(dir: impl AsRef<Path>, entry: &ManifestEntry) -> Result<DatasetSample> {
    let dir = dir.as_ref();
    Ok(DatasetSample {
        id: entry.id.clone(),
        shape: entry.shape.clone(),
        input: ply::read(dir.join(&entry.input_file))?,
        target: ply::read(dir.join(&entry.target_file))?,
        normalization: entry.normalization,
        truncation: entry.truncation,
        seed: entry.seed,
    })
}

/// The train-time view of a stored sample: optional noise on the input,
/// then an optional joint rotation.
pub fn augment_sample(
    sample: &DatasetSample,
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<DatasetSample> {
    let mut out = sample.clone();
    out.input = add_noise(
        &sample.input,
        spec.noise_sigma,
        derive_seed(seed, &["noise"]),
    )?;
    if let Some(n) = sample.normalization {
        out.normalization = input_normalization(&out.input, n.lambda);
    }
    if spec.rotation == RotationAugment::Uniform {
        out = random_rotation(&out, derive_seed(seed, &["rotation"]));
    }
    Ok(out)
}
