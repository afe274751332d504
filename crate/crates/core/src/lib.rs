//! Haptic force estimation and delay-bound relaxation for teleoperation
//! traffic.
//!
//! - [`trace`]: haptic trace loading, synthesis, and input windows
//! - [`deadband`]: Weber-law perceptual deadband codec
//! - [`estimator`]: dual-branch force estimator inference and rollout
//! - [`queueing`]: M/M/1 delay-violation model and batch sizing
//! - [`netsim`]: discrete-time downlink simulator and capacity search
//! - [`par`]: data-parallel helpers with a sequential fallback

pub mod deadband;
pub mod error;
pub mod estimator;
pub mod netsim;
pub mod par;
pub mod queueing;
pub mod trace;

pub use error::{Error, Result};
pub use par::Execution;
