//! Experiment configuration file (TOML). Every section is optional and falls
//! back to defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use tactile_core::estimator::ModelConfig;
use tactile_core::netsim::{FadingParams, SimConfig};
use tactile_core::trace::MotionKind;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Overrides every seed below when set.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub sim: SimConfig,
    pub estimate: EstimateSection,
    pub capacity: CapacitySection,
    pub analytic: AnalyticSection,
    pub deadband: DeadbandSection,
    pub mm1: Mm1Section,
    pub synth_trace: SynthTraceSection,
    pub synth_channel: SynthChannelSection,
    pub model: ModelSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub mm_weights: Option<PathBuf>,
    pub fo_weights: Option<PathBuf>,
    /// Validation trace CSV.
    pub trace: Option<PathBuf>,
    /// Longest horizon, in sampling periods.
    pub horizon: usize,
    /// Spacing of rollout start points, ticks.
    pub stride: usize,
    /// Error threshold in newtons; 5% of the largest per-axis force range
    /// when unset.
    pub eps_th: Option<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            mm_weights: None,
            fo_weights: None,
            trace: None,
            horizon: 20,
            stride: 50,
            eps_th: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacitySection {
    pub tw_ms: Vec<f64>,
    pub users_min: usize,
    pub users_max: usize,
    pub users_step: usize,
    pub satisfied_frac: f64,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self {
            tw_ms: vec![1.0, 5.0, 10.0, 15.0, 20.0],
            users_min: 1,
            users_max: 300,
            users_step: 1,
            satisfied_frac: 0.95,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub mu: f64,
    pub rho: Vec<f64>,
    pub dmax_ms: Vec<f64>,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            mu: 1000.0,
            rho: vec![0.3, 0.5, 0.7, 0.9],
            dmax_ms: (0..=20).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeadbandSection {
    /// Trace CSV; a synthetic trace is used when unset.
    pub trace: Option<PathBuf>,
    pub c: Vec<f64>,
    pub floor_eps: f64,
}

impl Default for DeadbandSection {
    fn default() -> Self {
        Self {
            trace: None,
            c: vec![0.05, 0.1, 0.15, 0.2],
            floor_eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mm1Section {
    pub lambda: f64,
    pub mu: f64,
    pub dmax_ms: Vec<f64>,
    pub packets: u64,
}

impl Default for Mm1Section {
    fn default() -> Self {
        Self {
            lambda: 500.0,
            mu: 1000.0,
            dmax_ms: vec![1.0, 2.0, 5.0, 10.0],
            packets: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthTraceSection {
    pub activity: MotionKind,
    pub length: usize,
    pub stiffness_fraction: f64,
    pub damping: f64,
}

impl Default for SynthTraceSection {
    fn default() -> Self {
        Self {
            activity: MotionKind::SinusoidalPush,
            length: 10_000,
            stiffness_fraction: 0.5,
            damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthChannelSection {
    pub users: usize,
    pub duration_s: f64,
    pub fading: FadingParams,
}

impl Default for SynthChannelSection {
    fn default() -> Self {
        Self {
            users: 10,
            duration_s: 10.0,
            fading: FadingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub config: ModelConfig,
    /// Trace whose statistics seed the normalization of fresh weights.
    pub norm_trace: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            config: ModelConfig::default(),
            norm_trace: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Apply `--seed` and `--out-dir`; flags win over the file.
    pub fn apply_common(&mut self, seed: Option<u64>, out_dir: Option<PathBuf>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if out_dir.is_some() {
            self.out_dir = out_dir;
        }
        if let Some(s) = self.seed {
            self.sim.seed = s;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.sim.seed)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(c.sim, SimConfig::default());
        assert_eq!(c.estimate.stride, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[sim]\nusers = 3\nspeed = 2").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c: ExperimentConfig = toml::from_str("seed = 4\nout_dir = \"a\"").unwrap();
        c.apply_common(Some(9), Some("b".into()));
        assert_eq!(c.sim.seed, 9);
        assert_eq!(c.out_dir(), PathBuf::from("b"));
    }
}
