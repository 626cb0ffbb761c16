//! Next-touch selection. Predicted surface far from every measurement is
//! worth touching; moving the hand there costs something. Candidates are
//! importance-sampled from the uncovered belief, filtered for reachability
//! and ranked by gain minus cost.

mod episode;

pub use episode::{
    initial_state, read_episode_log, run_episode, run_episode_with, BeliefSummary, EpisodeHeader,
    EpisodeOutcome, EpisodeRecord, IterationRecord, Termination, EPISODE_SCHEMA_VERSION,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::ReferenceCompleter;
use crate::error::{Error, Result};
use crate::geometry::{
    any_orthogonal, estimate_normals, Point3, PointCloud, Pose, SpatialIndex, UnitVec3,
};
use crate::gripper::{approach_until_contact, min_clearance, ContactParams, GripperModel};
use crate::modes::InteractionMode;
use crate::primitives::PrimitiveShape;

/// Axis-aligned box the hand origin must stay inside (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: [-300.0; 3],
            max: [300.0; 3],
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    /// Predicted points closer than this to a measurement count as covered (mm).
    pub coverage_threshold: f64,
    /// Candidate draws per round.
    pub samples: usize,
    /// Bandwidth of the coverage kernel (mm).
    pub sigma: f64,
    /// Motion weights: three translation coordinates (per mm), then three
    /// rotation-vector coordinates (per rad).
    pub weights: [f64; 6],
    pub trajectory_steps: usize,
    /// Consecutive belief changes that must stay below the threshold.
    pub window: usize,
    /// Belief-to-belief Chamfer threshold (dimensionless).
    pub convergence_threshold: f64,
    pub max_interactions: usize,
    pub mode: InteractionMode,
    pub contact: ContactParams,
    /// Gap between the fingertips and the target at the standoff pose (mm).
    pub clearance: f64,
    /// Longest approach from a standoff pose (mm).
    pub approach_travel: f64,
    pub workspace: Workspace,
    /// Neighbors used to estimate belief normals.
    pub normal_neighbors: usize,
    pub belief_points: usize,
    /// Ground-truth samples for scoring beliefs.
    pub truth_points: usize,
    pub lambda: f64,
    /// Candidate rounds before giving up on finding a reachable pose.
    pub resample_rounds: usize,
    pub completer: ReferenceCompleter,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            coverage_threshold: 5.0,
            samples: 500,
            sigma: 5.0,
            weights: [1.0, 1.0, 1.0, 50.0, 50.0, 50.0],
            trajectory_steps: 20,
            window: 3,
            convergence_threshold: 0.01,
            max_interactions: 20,
            mode: InteractionMode::default_for(crate::modes::ModeKind::FingerGrazing),
            contact: ContactParams::default(),
            clearance: 10.0,
            approach_travel: 80.0,
            workspace: Workspace::default(),
            normal_neighbors: 10,
            belief_points: 2048,
            truth_points: 4096,
            lambda: 1.0,
            resample_rounds: 3,
            completer: ReferenceCompleter::default(),
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if self.samples == 0 {
            return bad("at least one candidate sample is needed");
        }
        if self.max_interactions == 0 {
            return bad("at least one interaction is needed");
        }
        if self.window == 0 || self.trajectory_steps == 0 || self.resample_rounds == 0 {
            return bad("window, trajectory steps and resample rounds must be positive");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("motion weights must be finite and non-negative");
        }
        if !(self.coverage_threshold >= 0.0) || !(self.convergence_threshold >= 0.0) {
            return bad("thresholds must be non-negative");
        }
        if !(self.clearance >= 0.0) || !(self.approach_travel > 0.0) {
            return bad("clearance must be non-negative and approach travel positive");
        }
        if self.belief_points == 0 || self.truth_points == 0 {
            return bad("point counts must be positive");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if (0..3).any(|i| !(self.workspace.min[i] < self.workspace.max[i])) {
            return bad("workspace box is empty");
        }
        self.mode.validate()
    }
}

/// A hand placement facing a predicted surface point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePose {
    /// Position in the draw order.
    pub index: usize,
    pub target: Point3,
    /// Outward belief normal at the target.
    pub normal: UnitVec3,
    pub pose: Pose,
    /// Distance from the target to the nearest measurement (mm).
    pub coverage: f64,
    pub information_gain: f64,
    pub motion_cost: f64,
    pub score: f64,
    /// `None` until checked.
    pub feasible: Option<bool>,
}

/// Self-information of the coverage kernel `exp(-d^2 / 2 sigma^2)`.
pub fn information_gain(d_min: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0 && d_min >= 0.0);
    d_min * d_min / (2.0 * sigma * sigma)
}

/// Draws `config.samples` targets among the uncovered belief points with
/// probability proportional to their gain, and turns each into a standoff
/// pose with a random roll about the palm axis.
pub fn sample_candidates(
    belief: &PointCloud,
    measured: &PointCloud,
    config: &ExplorationConfig,
    standoff: f64,
    seed: u64,
) -> Result<Vec<CandidatePose>> {
    if belief.is_empty() || measured.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = SpatialIndex::new(measured.points());
    let pts = belief.points();
    let uncovered: Vec<(usize, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (i, index.nearest(p).map(|(_, d)| d).unwrap_or(0.0)))
        .filter(|&(_, d)| d > config.coverage_threshold)
        .collect();
    if uncovered.is_empty() {
        return Err(Error::NothingToExplore);
    }
    let gains: Vec<f64> = uncovered
        .iter()
        .map(|&(_, d)| information_gain(d, config.sigma))
        .collect();
    let pick = WeightedIndex::new(&gains).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let with_normals = estimate_normals(belief, config.normal_neighbors)?;
    let normals = with_normals.normals().expect("estimated normals");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.samples);
    for index in 0..config.samples {
        let k = pick.sample(&mut rng);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let (i, d) = uncovered[k];
        let n = normals[i];
        let facing = -n;
        let base = Pose::from_z_and_x(
            &facing,
            &any_orthogonal(&facing).into_inner(),
            Point3::zeros(),
        )
        .expect("orthogonal hint");
        let rolled = Pose::from_axis_angle(&facing, yaw).compose(&base);
        let pose = Pose::from_parts(*rolled.rotation(), pts[i] + n.into_inner() * standoff);
        out.push(CandidatePose {
            index,
            target: pts[i],
            normal: n,
            pose,
            coverage: d,
            information_gain: gains[k],
            motion_cost: 0.0,
            score: gains[k],
            feasible: None,
        });
    }
    Ok(out)
}

/// Whether the hand can sit open at `pose` and reach the object by moving
/// straight along its palm axis: the origin lies in the workspace, the open
/// hand clears the object, and the approach ends in contact.
pub fn is_feasible(
    model: &GripperModel,
    shape: &PrimitiveShape,
    config: &ExplorationConfig,
    pose: &Pose,
) -> bool {
    if !config.workspace.contains(&pose.translation()) {
        return false;
    }
    let start = model.open_state(*pose);
    if !(min_clearance(model, &start, shape) > config.contact.tol) {
        return false;
    }
    approach_until_contact(
        model,
        &start,
        &start.palm_normal(),
        shape,
        &config.contact,
        config.approach_travel,
        0,
    )
    .is_ok()
}

/// Flags every candidate; none is dropped or otherwise changed.
pub fn filter_feasible(
    candidates: &[CandidatePose],
    shape: &PrimitiveShape,
    config: &ExplorationConfig,
    model: &GripperModel,
) -> Vec<CandidatePose> {
    candidates
        .iter()
        .map(|c| CandidatePose {
            feasible: Some(is_feasible(model, shape, config, &c.pose)),
            ..c.clone()
        })
        .collect()
}

/// Weighted L1 length of the straight path between the two poses' six
/// coordinates, summed over `steps` interpolation segments.
pub fn motion_cost(from: &Pose, to: &Pose, weights: &[f64; 6], steps: usize) -> f64 {
    let a = from.coordinates();
    let b = to.coordinates();
    let steps = steps.max(1);
    let at = |t: usize| -> [f64; 6] {
        let s = t as f64 / steps as f64;
        std::array::from_fn(|c| a[c] + (b[c] - a[c]) * s)
    };
    let mut prev = a;
    let mut cost = 0.0;
    for t in 1..=steps {
        let q = at(t);
        cost += (0..6)
            .map(|c| weights[c] * (q[c] - prev[c]).abs())
            .sum::<f64>();
        prev = q;
    }
    cost
}

/// Gain minus motion cost from `current`, best first; ties go to the cheaper
/// move, then to the earlier draw.
pub fn score_candidates(
    candidates: &[CandidatePose],
    current: &Pose,
    config: &ExplorationConfig,
) -> Vec<CandidatePose> {
    let out: Vec<CandidatePose> = candidates
        .iter()
        .map(|c| {
            let cost = motion_cost(current, &c.pose, &config.weights, config.trajectory_steps);
            CandidatePose {
                motion_cost: cost,
                score: c.information_gain - cost,
                ..c.clone()
            }
        })
        .collect();
    rank_candidates(out)
}

/// Sorts by the stored score, best first, with the same tie rules.
pub fn rank_candidates(mut out: Vec<CandidatePose>) -> Vec<CandidatePose> {
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.motion_cost.total_cmp(&b.motion_cost))
            .then(a.index.cmp(&b.index))
    });
    out
}
