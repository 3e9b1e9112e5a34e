//! Demonstration-capture pipeline for wearable-rig robot teaching.
//!
//! The crate covers the software path from raw sensor streams to replayed
//! robot commands:
//!
//! - [`se3`]: pose algebra, interpolation, and the SLAM-to-robot
//!   calibration solve.
//! - [`sync`]: multi-rate stream multiplexer emitting time-aligned frames
//!   at a master tick.
//! - [`retarget`]: glove-to-hand joint mapping for configurable dexterous
//!   hands.
//! - [`store`]: verifiable on-disk episode format plus dataset statistics.
//! - [`replay`]: action-chunk streaming into a robot sink under a safety
//!   envelope.
//! - [`sim`]: seeded simulated sensors, the end-to-end scenario runner,
//!   and the text formats behind the `exocap` CLI.

pub mod config;
pub mod replay;
pub mod retarget;
pub mod se3;
pub mod sim;
pub mod store;
pub mod sync;

pub use se3::{apply_calibration, compose, estimate_calibration, interpolate, invert, Pose};
