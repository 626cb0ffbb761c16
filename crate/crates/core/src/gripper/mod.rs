//! Kinematic five-finger hand with taxel arrays on the palm and on every
//! finger, and geometric contact detection against primitive objects.

mod contact;
mod model;

pub use contact::{
    approach_until_contact, close_fingers_until_contact, detect_contacts, min_clearance,
    seat_finger, ContactEvent, ContactParams,
};
pub use model::{
    taxel_positions, FingerSpec, GripperModel, GripperState, HandDescription, Link, Region, Taxel,
    TaxelArray, HAND_SCHEMA_VERSION,
};
