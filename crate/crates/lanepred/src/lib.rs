//! Lane-change detection and trajectory prediction from prototype motion
//! patterns.
//!
//! Pipeline: lane-relative coordinates ([`frenet`]) -> automatic maneuver
//! labeling ([`labeling`]) -> hierarchical clustering into prototypes
//! ([`cluster`]) -> online prototype matching and feature extraction
//! ([`matching`]) -> maneuver classification ([`classify`]) -> mixture
//! trajectory prediction ([`predict`]) -> evaluation ([`metrics`]).

pub mod bspline;
pub mod classify;
pub mod cluster;
pub mod error;
pub mod frenet;
pub mod io;
pub mod labeling;
pub mod matching;
pub mod metrics;
pub mod predict;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
