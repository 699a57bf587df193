//! Measurement and analysis core for wearable-resistance squat training.

pub mod analysis;
pub mod band_force;
pub mod calibration;
pub mod feedback;
pub mod io;
pub mod kinematics;
pub mod manifest;
pub mod markers;
pub mod protocol;
pub mod session;
pub mod simulator;
pub mod stats;
