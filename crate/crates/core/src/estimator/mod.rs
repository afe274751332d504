//! Dual-branch force estimator inference, rollout, and evaluation.

pub mod golden;
pub mod layers;
pub mod model;
pub mod rollout;
pub mod weights;

pub use model::{branch_forward, branch_trace, BranchTrace, ForceEstimator, LastForceEcho};
pub use rollout::{
    baseline_linear, baseline_zoh, default_eps_th, horizon_profile, max_horizon_for_threshold,
    mse_per_axis, rollout, rollout_window, start_points, AxisMse, HorizonProfile, RolloutResult,
};
pub use weights::{load_weights, tensor_names, BranchWeights, Mode, ModelConfig, ModelWeights};
