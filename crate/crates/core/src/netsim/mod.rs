//! Discrete-time downlink simulator: haptic and video traffic, round-robin
//! RB scheduling over two pools, delay-bound drops, batching and capacity
//! search, plus a Monte-Carlo M/M/1 queue.

pub mod capacity;
pub mod channel;
pub mod config;
pub mod mm1;
pub mod scheduler;
pub mod sim;
pub mod traffic;

pub use capacity::{
    capacity_search, capacity_sweep, capacity_sweep_with, CapacityPoint, CapacityResult, SweepEntry,
    DEFAULT_SATISFIED_FRAC,
};
pub use channel::{load_channel, read_channel, synth_channel, ChannelProfile, ChannelSource};
pub use config::{ChannelSpec, FadingParams, HapticSource, SimConfig, VideoModel};
pub use mm1::{run_mm1, Mm1Point, Mm1Result, MM1_REPLICATIONS};
pub use scheduler::{schedule_tti, PoolSizes, TtiReport, UserQueues};
pub use sim::{average_dropout, run_sim, run_sim_with, SimInputs, SimMetrics, UserMetrics, VideoMetrics};
pub use traffic::{Batcher, HapticStream, Packet, PacketKind, VideoSource};
