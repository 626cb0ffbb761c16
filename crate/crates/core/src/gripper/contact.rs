use serde::{Deserialize, Serialize};

use super::model::{taxel_positions, GripperModel, GripperState};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, UnitVec3};
use crate::primitives::PrimitiveShape;

/// Contact simulation parameters (millimeters and radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactParams {
    pub tol: f64,
    pub approach_step: f64,
    pub refinements: usize,
    pub curl_step: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            tol: 0.5,
            approach_step: 2.0,
            refinements: 10,
            curl_step: 2f64.to_radians(),
        }
    }
}

/// Taxels touching the object at one instant.
///
/// `points` are the contacts snapped onto the surface, with outward normals
/// and the event's timestamp; `taxel_positions` are the unsnapped taxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub points: PointCloud,
    pub taxel_ids: Vec<usize>,
    pub taxel_positions: Vec<Point3>,
    pub state: GripperState,
}

impl ContactEvent {
    pub fn is_empty(&self) -> bool {
        self.taxel_ids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.taxel_ids.len()
    }
}

/// Every taxel with `sdf <= tol`, snapped to the closest surface point.
///
/// The normal of each contact is the signed-distance gradient at the taxel,
/// which is the outward normal of the touched surface feature.
pub fn detect_contacts(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    tol: f64,
    stamp: u64,
) -> Result<ContactEvent> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    model.validate_state(state)?;
    let taxels = taxel_positions(model, state);
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    for (i, p) in taxels.points().iter().enumerate() {
        let d = shape.signed_distance(p);
        if d < -2.0 * tol {
            return Err(Error::PenetrationTooDeep { depth: -d });
        }
        if d <= tol {
            ids.push(i);
            raw.push(*p);
            pts.push(shape.closest_point(p));
            normals.push(shape.sdf_gradient(p));
        }
    }
    let n = pts.len();
    let points = PointCloud::from_parts(pts, Some(normals), Some(vec![stamp; n]))?;
    Ok(ContactEvent {
        points,
        taxel_ids: ids,
        taxel_positions: raw,
        state: state.clone(),
    })
}

/// Smallest signed distance over all taxels.
pub fn min_clearance(model: &GripperModel, state: &GripperState, shape: &PrimitiveShape) -> f64 {
    model
        .taxel_positions_hand(&state.curls)
        .iter()
        .map(|p| shape.signed_distance(&state.pose.transform_point(p)))
        .fold(f64::INFINITY, f64::min)
}

fn finger_clearance(
    model: &GripperModel,
    state: &GripperState,
    finger: usize,
    theta: f64,
    shape: &PrimitiveShape,
) -> f64 {
    model
        .finger_positions(&state.pose, finger, theta)
        .iter()
        .map(|p| shape.signed_distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Bisection between `lo` (clearance above `tol`) and `hi` (clearance at or
/// below `tol`) for a parameter whose clearance lies in `[0, tol]`. Falls
/// back to `lo` (no contact) if the band is never hit.
fn refine(mut lo: f64, mut hi: f64, tol: f64, iters: usize, f: impl Fn(f64) -> f64) -> (f64, bool) {
    let at_hi = f(hi);
    if (0.0..=tol).contains(&at_hi) {
        return (hi, true);
    }
    for _ in 0..iters.max(1) * 6 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v > tol {
            lo = mid;
        } else if v < 0.0 {
            hi = mid;
        } else {
            return (mid, true);
        }
    }
    (lo, false)
}

/// Translates the hand along `direction` in increments of `step` until a
/// taxel is within `tol` of the surface, then bisects so the closest taxel
/// ends with `0 <= sdf <= tol`.
#[allow(clippy::too_many_arguments)]
pub fn approach_until_contact(
    model: &GripperModel,
    start: &GripperState,
    direction: &UnitVec3,
    shape: &PrimitiveShape,
    params: &ContactParams,
    max_travel: f64,
    stamp: u64,
) -> Result<(GripperState, ContactEvent)> {
    if !(params.approach_step > 0.0) {
        return Err(Error::InvalidParameter(
            "approach step must be positive".into(),
        ));
    }
    model.validate_state(start)?;
    let at = |s: f64| GripperState {
        pose: start.pose.translated(&(direction.into_inner() * s)),
        curls: start.curls.clone(),
    };
    let clearance = |s: f64| min_clearance(model, &at(s), shape);
    let tol = params.tol;

    let first = clearance(0.0);
    if first < 0.0 {
        return Err(Error::PenetrationTooDeep { depth: -first });
    }
    let mut s = 0.0;
    let mut prev = 0.0;
    let mut d = first;
    while d > tol {
        if s >= max_travel {
            return Err(Error::NoContact { travel: max_travel });
        }
        prev = s;
        s = (s + params.approach_step).min(max_travel);
        d = clearance(s);
    }
    let travel = if d >= 0.0 {
        s
    } else {
        let (t, hit) = refine(prev, s, tol, params.refinements, clearance);
        if !hit {
            return Err(Error::NoContact { travel: s });
        }
        t
    };
    let state = at(travel);
    let event = detect_contacts(model, &state, shape, tol, stamp)?;
    Ok((state, event))
}

/// Moves one finger to the nearest seated curl: closes from a free pose until
/// contact (or the joint limit), opens from a penetrating pose until the
/// penetration clears. Returns the new curl and whether it touches.
pub fn seat_finger(
    model: &GripperModel,
    state: &GripperState,
    finger: usize,
    shape: &PrimitiveShape,
    params: &ContactParams,
) -> (f64, bool) {
    let tol = params.tol;
    let theta_max = model.theta_max(finger);
    let f = |t: f64| finger_clearance(model, state, finger, t, shape);
    let theta0 = state.curls[finger].clamp(0.0, theta_max);
    let d0 = f(theta0);
    if (0.0..=tol).contains(&d0) {
        return (theta0, true);
    }
    if d0 > tol {
        let mut t = theta0;
        while t < theta_max {
            let prev = t;
            t = (t + params.curl_step).min(theta_max);
            let d = f(t);
            if d <= tol {
                if d >= 0.0 {
                    return (t, true);
                }
                return refine(prev, t, tol, params.refinements, f);
            }
        }
        (theta_max, false)
    } else {
        // penetrating: open until free, then bisect back toward the surface
        let mut t = theta0;
        while t > 0.0 {
            let prev = t;
            t = (t - params.curl_step).max(0.0);
            let d = f(t);
            if d >= 0.0 {
                if d <= tol {
                    return (t, true);
                }
                return refine(t, prev, tol, params.refinements, f);
            }
        }
        // still penetrating when fully open; leave it open
        (0.0, false)
    }
}

/// Closes every finger independently until it touches or reaches its limit,
/// then reports all contacts of the hand.
pub fn close_fingers_until_contact(
    model: &GripperModel,
    state: &GripperState,
    shape: &PrimitiveShape,
    params: &ContactParams,
    stamp: u64,
) -> Result<(GripperState, ContactEvent)> {
    model.validate_state(state)?;
    let mut next = state.clone();
    for finger in 0..model.finger_count() {
        let (theta, _) = seat_finger(model, state, finger, shape, params);
        next.curls[finger] = theta;
    }
    let event = detect_contacts(model, &next, shape, params.tol, stamp)?;
    Ok((next, event))
}
