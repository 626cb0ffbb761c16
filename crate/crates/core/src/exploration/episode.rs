//! The exploration loop: touch, accumulate, complete, pick the next touch,
//! until the belief settles, nothing is left uncovered, or the interaction
//! budget runs out. Each episode is logged as JSON lines.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{is_feasible, sample_candidates, score_candidates, CandidatePose, ExplorationConfig};
use crate::completion::{BeliefState, Completer, CompleterInput, FitResult};
use crate::error::{Error, Result};
use crate::files;
use crate::geometry::{
    any_orthogonal, normalized_chamfer, unit, voxel_volume, Point3, PointCloud, Pose,
};
use crate::gripper::{approach_until_contact, ContactEvent, GripperModel, GripperState};
use crate::modes::{run_interaction, Clock, InteractionMode};
use crate::primitives::{sample_surface, NamedObject, PrimitiveShape};
use crate::seed::{derive_seed, sha256_hex};

pub const EPISODE_SCHEMA_VERSION: u32 = 1;

/// Why an episode stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The last `window` belief changes were all below the threshold.
    BeliefConverged,
    /// Every predicted point lies within the coverage threshold.
    CoverageSaturated,
    InteractionCap,
    NoFeasibleCandidate,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::BeliefConverged | Termination::CoverageSaturated
        )
    }
}

/// What the log keeps of a belief; the points themselves go to snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub points: usize,
    pub fit: Option<FitResult>,
    pub fallback: bool,
    /// SHA-256 of the belief as PLY text.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based interaction number.
    pub iteration: usize,
    pub start: GripperState,
    /// The candidate that placed the hand; `None` for the first touch and
    /// after a restart.
    pub candidate: Option<CandidatePose>,
    /// Candidates checked for feasibility before one passed.
    pub candidates_checked: usize,
    pub events: Vec<ContactEvent>,
    pub contact_lost: bool,
    pub new_points: usize,
    pub measured_points: usize,
    pub belief: Option<BeliefSummary>,
    pub chamfer_truth: Option<f64>,
    pub chamfer_previous: Option<f64>,
    /// Occupied 1 mm voxels of all measurements so far (mm^3).
    pub contact_volume: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub converged: bool,
    pub termination: Termination,
    pub interactions: usize,
    /// Ground-truth Chamfer of the last belief.
    pub final_chamfer: Option<f64>,
    pub contact_volume: f64,
    pub volume_per_interaction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub mode: InteractionMode,
    pub iterations: Vec<IterationRecord>,
    pub outcome: EpisodeOutcome,
    /// Belief clouds by iteration; `None` where completion was not possible.
    #[serde(skip)]
    pub beliefs: Vec<Option<PointCloud>>,
}

/// Identifies an episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema_version: u32,
    pub object: NamedObject,
    pub trial: usize,
    pub config: ExplorationConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine {
    Header(EpisodeHeader),
    Episode { seed: u64, mode: InteractionMode },
    Iteration(Box<IterationRecord>),
    Outcome(EpisodeOutcome),
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

/// Open hand facing the object's center from a random direction, far enough
/// out that no taxel touches; returns the state and the travel that reaches
/// the object. Directions whose approach misses are re-drawn.
pub fn initial_state(
    model: &GripperModel,
    shape: &PrimitiveShape,
    config: &ExplorationConfig,
    seed: u64,
) -> Result<(GripperState, f64)> {
    const ATTEMPTS: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = shape.pose().translation();
    let reach = shape.bounding_radius() + model.depth() + config.clearance;
    let travel = reach + shape.bounding_radius();
    for _ in 0..ATTEMPTS {
        let dir = random_unit(&mut rng);
        let roll = rng.random_range(0.0..std::f64::consts::TAU);
        let facing = -dir;
        let Some(base) = Pose::from_z_and_x(
            &facing,
            &any_orthogonal(&facing).into_inner(),
            Point3::zeros(),
        ) else {
            continue;
        };
        let rolled = Pose::from_axis_angle(&facing, roll).compose(&base);
        let state = model.open_state(Pose::from_parts(
            *rolled.rotation(),
            center + dir.into_inner() * reach,
        ));
        match approach_until_contact(
            model,
            &state,
            &state.palm_normal(),
            shape,
            &config.contact,
            travel,
            0,
        ) {
            Ok(_) => return Ok((state, travel)),
            Err(Error::NoContact { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed { attempts: ATTEMPTS })
}

/// Failures that only mean the contacts cannot support a belief yet.
fn premature(e: &Error) -> bool {
    matches!(
        e,
        Error::TooFewPoints { .. }
            | Error::DegenerateCloud(_)
            | Error::NormalizationUndefined
            | Error::DegenerateConfiguration(_)
    )
}

fn complete(
    completer: &dyn Completer,
    measured: &PointCloud,
    config: &ExplorationConfig,
    seed: u64,
) -> Result<BeliefState> {
    let input = CompleterInput::new(measured, config.lambda)?;
    completer.complete(&input, config.belief_points, seed)
}

/// One episode with the configured reference completer.
pub fn run_episode(
    model: &GripperModel,
    shape: &PrimitiveShape,
    config: &ExplorationConfig,
    seed: u64,
) -> Result<EpisodeRecord> {
    run_episode_with(model, shape, config, &config.completer, seed)
}

pub fn run_episode_with(
    model: &GripperModel,
    shape: &PrimitiveShape,
    config: &ExplorationConfig,
    completer: &dyn Completer,
    seed: u64,
) -> Result<EpisodeRecord> {
    config.validate()?;
    let truth = sample_surface(shape, config.truth_points, derive_seed(seed, &["truth"]))?;
    // one completion seed per episode, so an unchanged fit gives an unchanged belief
    let completion_seed = derive_seed(seed, &["completion"]);
    let standoff = model.depth() + config.clearance;

    let mut clock = Clock::default();
    let (mut start, mut travel) =
        initial_state(model, shape, config, derive_seed(seed, &["start"]))?;
    let mut placed_by: Option<CandidatePose> = None;
    let mut checked = 0;
    let mut measured = PointCloud::default();
    let mut previous: Option<PointCloud> = None;
    let mut streak = 0;
    let mut iterations = Vec::new();
    let mut beliefs = Vec::new();
    let mut termination = Termination::InteractionCap;

    for it in 1..=config.max_interactions {
        let res = run_interaction(
            model,
            &start,
            shape,
            &config.mode,
            &config.contact,
            travel,
            &mut clock,
        )?;
        measured.append(&res.merged)?;
        let volume = if measured.is_empty() {
            0.0
        } else {
            voxel_volume(&measured, 1.0)?
        };
        let mut note = None;
        let belief = match complete(completer, &measured, config, completion_seed) {
            Ok(b) => Some(b),
            Err(e) if premature(&e) => {
                note = Some(e.to_string());
                None
            }
            Err(e) => return Err(e),
        };
        let (summary, chamfer_truth, chamfer_previous) = match &belief {
            Some(b) => {
                let to_prev = match &previous {
                    Some(p) => Some(normalized_chamfer(p, &b.cloud, &b.cloud, config.lambda)?),
                    None => None,
                };
                let summary = BeliefSummary {
                    points: b.cloud.len(),
                    fit: b.fit.clone(),
                    fallback: b.diagnostics.fallback,
                    digest: sha256_hex(crate::geometry::ply::to_string(&b.cloud).as_bytes()),
                };
                (
                    Some(summary),
                    Some(normalized_chamfer(&b.cloud, &truth, &truth, config.lambda)?),
                    to_prev,
                )
            }
            None => (None, None, None),
        };
        streak = match chamfer_previous {
            Some(c) if c < config.convergence_threshold => streak + 1,
            _ => 0,
        };
        iterations.push(IterationRecord {
            iteration: it,
            start: start.clone(),
            candidate: placed_by.take(),
            candidates_checked: checked,
            events: res.events,
            contact_lost: res.contact_lost,
            new_points: res.merged.len(),
            measured_points: measured.len(),
            belief: summary,
            chamfer_truth,
            chamfer_previous,
            contact_volume: volume,
            note,
        });
        beliefs.push(belief.as_ref().map(|b| b.cloud.clone()));
        if belief.is_some() {
            previous = belief.as_ref().map(|b| b.cloud.clone());
        }
        if streak >= config.window {
            termination = Termination::BeliefConverged;
            break;
        }
        if it == config.max_interactions {
            break;
        }

        let Some(belief) = belief else {
            // too little to predict from: touch again from a fresh direction
            let (s, t) = initial_state(
                model,
                shape,
                config,
                derive_seed(seed, &["restart", &it.to_string()]),
            )?;
            start = s;
            travel = t;
            checked = 0;
            continue;
        };
        let mut chosen = None;
        checked = 0;
        for round in 0..config.resample_rounds {
            let s = derive_seed(seed, &["candidates", &it.to_string(), &round.to_string()]);
            let candidates = match sample_candidates(&belief.cloud, &measured, config, standoff, s)
            {
                Ok(c) => c,
                Err(Error::NothingToExplore) => {
                    termination = Termination::CoverageSaturated;
                    break;
                }
                Err(e) => return Err(e),
            };
            // ranking first and checking lazily finds the same best feasible pose
            for mut c in score_candidates(&candidates, &res.final_state.pose, config) {
                checked += 1;
                if is_feasible(model, shape, config, &c.pose) {
                    c.feasible = Some(true);
                    chosen = Some(c);
                    break;
                }
            }
            if chosen.is_some() {
                break;
            }
        }
        if termination == Termination::CoverageSaturated {
            break;
        }
        let Some(c) = chosen else {
            log::warn!(
                "no feasible candidate after {} rounds",
                config.resample_rounds
            );
            termination = Termination::NoFeasibleCandidate;
            break;
        };
        start = model.open_state(c.pose);
        travel = config.approach_travel;
        placed_by = Some(c);
    }

    let interactions = iterations.len();
    let last = iterations.last().expect("at least one interaction");
    let contact_volume = last.contact_volume;
    let outcome = EpisodeOutcome {
        converged: termination.converged(),
        termination,
        interactions,
        final_chamfer: iterations.iter().rev().find_map(|r| r.chamfer_truth),
        contact_volume,
        volume_per_interaction: contact_volume / interactions as f64,
    };
    Ok(EpisodeRecord {
        seed,
        mode: config.mode,
        iterations,
        outcome,
        beliefs,
    })
}

impl EpisodeRecord {
    /// The log as JSON lines: header, episode identity, one line per
    /// iteration, outcome.
    pub fn to_log(&self, object: &NamedObject, trial: usize, config: &ExplorationConfig) -> String {
        let mut lines = vec![
            LogLine::Header(EpisodeHeader {
                schema_version: EPISODE_SCHEMA_VERSION,
                object: object.clone(),
                trial,
                config: config.clone(),
            }),
            LogLine::Episode {
                seed: self.seed,
                mode: self.mode,
            },
        ];
        lines.extend(
            self.iterations
                .iter()
                .map(|r| LogLine::Iteration(Box::new(r.clone()))),
        );
        lines.push(LogLine::Outcome(self.outcome.clone()));
        let mut out = String::new();
        for l in &lines {
            out.push_str(&serde_json::to_string(l).expect("log lines serialize"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the log text.
    pub fn digest(&self, object: &NamedObject, trial: usize, config: &ExplorationConfig) -> String {
        sha256_hex(self.to_log(object, trial, config).as_bytes())
    }

    pub fn write_log(
        &self,
        path: &Path,
        object: &NamedObject,
        trial: usize,
        config: &ExplorationConfig,
    ) -> Result<()> {
        files::write_atomic(path, self.to_log(object, trial, config).as_bytes())
    }

    /// One PLY per iteration with a belief, named `belief_XX.ply`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        files::create_dir(dir)?;
        for (k, b) in self.beliefs.iter().enumerate() {
            if let Some(b) = b {
                crate::geometry::ply::write_atomic(
                    b,
                    dir.join(format!("belief_{:02}.ply", k + 1)),
                )?;
            }
        }
        Ok(())
    }
}

/// Reads a log written by [`EpisodeRecord::write_log`]. Beliefs are not
/// restored.
pub fn read_episode_log(path: &Path) -> Result<(EpisodeHeader, EpisodeRecord)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mismatch = |found: String| Error::SchemaMismatch {
        path: path.to_path_buf(),
        expected: EPISODE_SCHEMA_VERSION,
        found,
    };
    let first = lines
        .next()
        .ok_or_else(|| mismatch("empty log".into()))?
        .map_err(|e| Error::io(path, e))?;
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| Error::json(path, e))?;
    match probe.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == EPISODE_SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(mismatch(v.to_string())),
        None => return Err(mismatch("none".into())),
    }
    let header = match serde_json::from_value(probe).map_err(|e| Error::json(path, e))? {
        LogLine::Header(h) => h,
        _ => return Err(mismatch("none".into())),
    };
    let mut ident = None;
    let mut iterations = Vec::new();
    let mut outcome = None;
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| Error::json(path, e))? {
            LogLine::Header(_) => {
                return Err(Error::InvalidParameter(format!(
                    "{}: repeated header",
                    path.display()
                )))
            }
            LogLine::Episode { seed, mode } => ident = Some((seed, mode)),
            LogLine::Iteration(r) => iterations.push(*r),
            LogLine::Outcome(o) => outcome = Some(o),
        }
    }
    let incomplete =
        || Error::InvalidParameter(format!("{}: incomplete episode log", path.display()));
    let (seed, mode) = ident.ok_or_else(incomplete)?;
    let outcome = outcome.ok_or_else(incomplete)?;
    let beliefs = vec![None; iterations.len()];
    Ok((
        header,
        EpisodeRecord {
            seed,
            mode,
            iterations,
            outcome,
            beliefs,
        },
    ))
}
