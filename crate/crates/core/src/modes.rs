//! The three post-contact interaction patterns: a single power grasp, fingers
//! grazing the surface while the hand retracts, and the palm rolling over it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, UnitVec3};
use crate::gripper::{
    approach_until_contact, detect_contacts, min_clearance, seat_finger, ContactEvent,
    ContactParams, GripperModel, GripperState, Region,
};
use crate::primitives::PrimitiveShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeKind {
    GraspReleasing,
    FingerGrazing,
    PalmRolling,
}

impl ModeKind {
    pub const ALL: [ModeKind; 3] = [
        ModeKind::GraspReleasing,
        ModeKind::FingerGrazing,
        ModeKind::PalmRolling,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModeKind::GraspReleasing => "GR",
            ModeKind::FingerGrazing => "FG",
            ModeKind::PalmRolling => "PR",
        }
    }
}

/// An interaction mode with its trajectory parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InteractionMode {
    GraspReleasing,
    FingerGrazing {
        /// Total retraction along the palm normal, mm.
        retract: f64,
        steps: usize,
    },
    PalmRolling {
        roll_deg: f64,
        pitch_deg: f64,
        /// Increments per phase.
        steps: usize,
        /// Largest re-contact translation before the contact counts as lost, mm.
        travel_cap: f64,
    },
}

impl InteractionMode {
    pub fn default_for(kind: ModeKind) -> Self {
        match kind {
            ModeKind::GraspReleasing => InteractionMode::GraspReleasing,
            ModeKind::FingerGrazing => InteractionMode::FingerGrazing {
                retract: 30.0,
                steps: 15,
            },
            ModeKind::PalmRolling => InteractionMode::PalmRolling {
                roll_deg: 30.0,
                pitch_deg: 30.0,
                steps: 12,
                travel_cap: 20.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InteractionMode::GraspReleasing => Ok(()),
            InteractionMode::FingerGrazing { retract, steps } => {
                if steps == 0 || !(retract >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "grazing needs steps >= 1 and retract >= 0".into(),
                    ));
                }
                Ok(())
            }
            InteractionMode::PalmRolling { steps, .. } => {
                if steps == 0 {
                    return Err(Error::InvalidParameter("rolling needs steps >= 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn kind(&self) -> ModeKind {
        match self {
            InteractionMode::GraspReleasing => ModeKind::GraspReleasing,
            InteractionMode::FingerGrazing { .. } => ModeKind::FingerGrazing,
            InteractionMode::PalmRolling { .. } => ModeKind::PalmRolling,
        }
    }
}

/// Events of one interaction in execution order, and their concatenation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionResult {
    pub events: Vec<ContactEvent>,
    pub merged: PointCloud,
    pub steps: usize,
    /// Set when a rolling sweep lost the object and stopped early.
    pub contact_lost: bool,
    pub final_state: GripperState,
}

impl InteractionResult {
    fn new(state: GripperState) -> Self {
        InteractionResult {
            events: Vec::new(),
            merged: PointCloud::default(),
            steps: 0,
            contact_lost: false,
            final_state: state,
        }
    }

    /// Records a non-empty event; the clock advances once per recorded event.
    fn push(&mut self, event: ContactEvent) -> Result<()> {
        if event.is_empty() {
            return Ok(());
        }
        self.merged.append(&event.points)?;
        self.events.push(event);
        Ok(())
    }
}

/// Monotone event counter shared by all interactions of an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock(pub u64);

impl Clock {
    pub fn tick(&mut self) -> u64 {
        let t = self.0;
        self.0 += 1;
        t
    }
}

fn require_contact(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    params: &ContactParams,
) -> Result<()> {
    let d = min_clearance(model, state, shape);
    if d > params.tol {
        return Err(Error::ModeRequiresContact);
    }
    Ok(())
}

fn keep_region(model: &GripperModel, event: ContactEvent, region: Region) -> Result<ContactEvent> {
    let keep: Vec<usize> = (0..event.len())
        .filter(|&k| model.taxels()[event.taxel_ids[k]].region == region)
        .collect();
    Ok(ContactEvent {
        points: event.points.select(&keep),
        taxel_ids: keep.iter().map(|&k| event.taxel_ids[k]).collect(),
        taxel_positions: keep.iter().map(|&k| event.taxel_positions[k]).collect(),
        state: event.state,
    })
}

fn finger_contact(model: &GripperModel, event: &ContactEvent) -> bool {
    event
        .taxel_ids
        .iter()
        .any(|&i| model.taxels()[i].region != Region::Palm)
}

/// Power grasp from the contact pose, one snapshot, then the fingers reopen.
pub fn run_grasp_releasing(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    params: &ContactParams,
    clock: &mut Clock,
) -> Result<InteractionResult> {
    require_contact(model, state, shape, params)?;
    let mut closed = state.clone();
    for f in 0..model.finger_count() {
        closed.curls[f] = seat_finger(model, state, f, shape, params).0;
    }
    let event = detect_contacts(model, &closed, shape, params.tol, clock.0)?;
    let mut out = InteractionResult::new(state.clone());
    if !event.is_empty() {
        clock.tick();
    }
    out.push(event)?;
    out.steps = 1;
    // release: back to the open hand at the contact pose
    out.final_state = model.open_state(state.pose);
    Ok(out)
}

/// Retracts the hand along the palm normal in `steps` increments; after each
/// increment every finger re-seats on the surface, closing when free and
/// opening when pulled into the object, which leaves sliding traces. The
/// sweep ends early once no finger touches.
pub fn run_finger_grazing(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    retract: f64,
    steps: usize,
    params: &ContactParams,
    clock: &mut Clock,
) -> Result<InteractionResult> {
    if steps == 0 || !(retract >= 0.0) {
        return Err(Error::InvalidParameter(
            "grazing needs steps >= 1 and retract >= 0".into(),
        ));
    }
    require_contact(model, state, shape, params)?;
    let back = -state.palm_normal().into_inner() * (retract / steps as f64);
    let mut cur = state.clone();
    let mut out = InteractionResult::new(state.clone());
    for _ in 0..steps {
        cur.pose = cur.pose.translated(&back);
        let snapshot = cur.clone();
        for f in 0..model.finger_count() {
            cur.curls[f] = seat_finger(model, &snapshot, f, shape, params).0;
        }
        out.steps += 1;
        let event = detect_contacts(model, &cur, shape, params.tol, clock.0)?;
        if !finger_contact(model, &event) {
            break;
        }
        clock.tick();
        out.push(event)?;
    }
    out.final_state = model.open_state(cur.pose);
    Ok(out)
}

/// Translates along the palm normal so that the hand touches again with
/// `0 <= min sdf <= tol`; `None` if that takes more than `cap` mm.
fn restore_contact(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    params: &ContactParams,
    cap: f64,
) -> Option<GripperState> {
    let n = state.palm_normal().into_inner();
    let at = |s: f64| GripperState {
        pose: state.pose.translated(&(n * s)),
        curls: state.curls.clone(),
    };
    let f = |s: f64| min_clearance(model, &at(s), shape);
    let tol = params.tol;
    let d0 = f(0.0);
    if (0.0..=tol).contains(&d0) {
        return Some(state.clone());
    }
    // walk toward (free) or away from (penetrating) the object
    let sign = if d0 > tol { 1.0 } else { -1.0 };
    let mut s = 0.0;
    loop {
        let prev = s;
        s += sign * params.approach_step;
        if s.abs() > cap + 1e-12 {
            return None;
        }
        let d = f(s);
        let crossed = if sign > 0.0 { d <= tol } else { d >= 0.0 };
        if !crossed {
            continue;
        }
        if (0.0..=tol).contains(&d) {
            return Some(at(s));
        }
        // bisect between a free parameter and a penetrating one
        let (mut free, mut pen) = if sign > 0.0 { (prev, s) } else { (s, prev) };
        for _ in 0..params.refinements.max(1) * 6 {
            let mid = 0.5 * (free + pen);
            let v = f(mid);
            if v > tol {
                free = mid;
            } else if v < 0.0 {
                pen = mid;
            } else {
                return Some(at(mid));
            }
        }
        return None;
    }
}

/// Rolls the open hand over the surface: phase 1 rotates about the hand's
/// long (wrist) axis 0 -> +roll -> -roll -> 0, phase 2 pitches about the
/// palm's lateral axis 0 -> pitch, each in `steps` increments. After every
/// increment the hand slides along its palm normal back into contact and
/// the palm contacts are recorded.
#[allow(clippy::too_many_arguments)]
pub fn run_palm_rolling(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    roll_deg: f64,
    pitch_deg: f64,
    steps: usize,
    travel_cap: f64,
    params: &ContactParams,
    clock: &mut Clock,
) -> Result<InteractionResult> {
    if steps == 0 {
        return Err(Error::InvalidParameter("rolling needs steps >= 1".into()));
    }
    require_contact(model, state, shape, params)?;
    let mut cur = model.open_state(state.pose);
    let mut out = InteractionResult::new(cur.clone());

    let first = keep_region(
        model,
        detect_contacts(model, &cur, shape, params.tol, clock.0)?,
        Region::Palm,
    )?;
    if !first.is_empty() {
        clock.tick();
    }
    out.push(first)?;

    let mut increments: Vec<(usize, f64)> = Vec::new();
    if roll_deg != 0.0 {
        // 0 -> +r -> -r -> 0 covers 4r of travel
        let path = [roll_deg, -2.0 * roll_deg, roll_deg];
        let total = 4.0 * roll_deg.abs();
        for k in 0..steps {
            let a = total * k as f64 / steps as f64;
            let b = total * (k + 1) as f64 / steps as f64;
            increments.push((1, signed_progress(&path, b) - signed_progress(&path, a)));
        }
    }
    if pitch_deg != 0.0 {
        for _ in 0..steps {
            increments.push((0, pitch_deg / steps as f64));
        }
    }

    for (axis, delta) in increments {
        let ax: UnitVec3 = cur.pose.axis(axis);
        let pivot = cur.pose.translation();
        let rotated = GripperState {
            pose: cur.pose.rotated_about(&ax, delta.to_radians(), &pivot),
            curls: cur.curls.clone(),
        };
        out.steps += 1;
        match restore_contact(model, &rotated, shape, params, travel_cap) {
            Some(next) => {
                cur = next;
                let event = keep_region(
                    model,
                    detect_contacts(model, &cur, shape, params.tol, clock.0)?,
                    Region::Palm,
                )?;
                if !event.is_empty() {
                    clock.tick();
                }
                out.push(event)?;
            }
            None => {
                out.contact_lost = true;
                break;
            }
        }
    }
    out.final_state = cur;
    Ok(out)
}

/// Position after `s` units of travel along a piecewise path of signed legs.
fn signed_progress(legs: &[f64], s: f64) -> f64 {
    let mut pos = 0.0;
    let mut left = s;
    for &leg in legs {
        let len = leg.abs();
        if left <= len {
            return pos + leg.signum() * left;
        }
        pos += leg;
        left -= len;
    }
    pos
}

/// Runs `mode` from a post-contact state.
pub fn run_mode(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    mode: &InteractionMode,
    params: &ContactParams,
    clock: &mut Clock,
) -> Result<InteractionResult> {
    match *mode {
        InteractionMode::GraspReleasing => run_grasp_releasing(model, state, shape, params, clock),
        InteractionMode::FingerGrazing { retract, steps } => {
            run_finger_grazing(model, state, shape, retract, steps, params, clock)
        }
        InteractionMode::PalmRolling {
            roll_deg,
            pitch_deg,
            steps,
            travel_cap,
        } => run_palm_rolling(
            model, state, shape, roll_deg, pitch_deg, steps, travel_cap, params, clock,
        ),
    }
}

/// Approach along the palm normal from `start`, then the mode. The approach
/// contact is the first event of the result.
pub fn run_interaction(
    model: &GripperModel,
    start: &GripperState,
    shape: &PrimitiveShape,
    mode: &InteractionMode,
    params: &ContactParams,
    max_travel: f64,
    clock: &mut Clock,
) -> Result<InteractionResult> {
    let dir = start.palm_normal();
    let (touch, approach) =
        approach_until_contact(model, start, &dir, shape, params, max_travel, clock.0)?;
    if !approach.is_empty() {
        clock.tick();
    }
    let rest = run_mode(model, &touch, shape, mode, params, clock)?;
    let mut out = InteractionResult::new(touch);
    out.push(approach)?;
    for e in rest.events {
        out.push(e)?;
    }
    out.steps = rest.steps + 1;
    out.contact_lost = rest.contact_lost;
    out.final_state = rest.final_state;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roll_path_progress() {
        let legs = [30.0, -60.0, 30.0];
        assert_eq!(signed_progress(&legs, 0.0), 0.0);
        assert_eq!(signed_progress(&legs, 30.0), 30.0);
        assert_eq!(signed_progress(&legs, 60.0), 0.0);
        assert_eq!(signed_progress(&legs, 90.0), -30.0);
        assert_eq!(signed_progress(&legs, 120.0), 0.0);
    }

    #[test]
    fn clock_ticks() {
        let mut c = Clock::default();
        assert_eq!(c.tick(), 0);
        assert_eq!(c.tick(), 1);
        assert_eq!(c.0, 2);
    }
}
