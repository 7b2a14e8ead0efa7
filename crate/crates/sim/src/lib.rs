//! Deterministic overflight simulator: a procedural PV plant, paired
//! thermal and RGB renders from the vehicle pose, first-order vehicle
//! kinematics and a biased GPS.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod gps;
pub mod layout;
pub mod render;

pub use dynamics::{step_dynamics, UavCommand, UavParams, UavState};
pub use gps::{gps_read, GpsModel, GpsReceiver};
pub use layout::{inject_waypoint_error, PlantLayout, Rototranslation, RowSpec};
pub use render::{frame_seed, panel_mask, render_rgb, render_thermal};
