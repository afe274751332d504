use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queueing::floor_ratio;
use crate::trace::MotionKind;

/// Statistical video source: fixed frame rate, truncated-normal frame sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoModel {
    pub fps: f64,
    /// Mean bitrate, bits/s.
    pub mean_bitrate: f64,
    /// Coefficient of variation of the frame size.
    pub frame_cv: f64,
    /// Per-chunk delay bound, seconds.
    pub deadline_s: f64,
}

impl Default for VideoModel {
    fn default() -> Self {
        Self {
            fps: 60.0,
            mean_bitrate: 1e6,
            frame_cv: 0.2,
            deadline_s: 0.016,
        }
    }
}

impl VideoModel {
    /// Mean frame size in bytes.
    pub fn mean_frame_bytes(&self) -> f64 {
        self.mean_bitrate / self.fps / 8.0
    }
}

/// Parameters of the synthetic block-fading channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams {
    /// Per-user mean SNR is drawn uniformly from this range, dB.
    pub mean_snr_db_range: (f64, f64),
    /// Rician K factor (linear); infinity disables fading.
    pub rician_k: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadowing_sigma_db: f64,
    /// Shadowing is redrawn every this many TTIs.
    pub shadowing_block: usize,
    /// Spectral efficiency cap, bits/s/Hz.
    pub se_cap: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            mean_snr_db_range: (10.0, 25.0),
            rician_k: 10.0,
            shadowing_sigma_db: 4.0,
            shadowing_block: 100,
            se_cap: 7.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Same spectral efficiency for every user and TTI.
    Fixed { se: f64 },
    Synthetic(FadingParams),
    /// `user,tti,se` CSV file.
    File { path: std::path::PathBuf },
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::Synthetic(FadingParams::default())
    }
}

/// How each user's haptic samples are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum HapticSource {
    /// One sample every sampling period.
    EveryTick,
    /// Deadband-coded synthetic activity traces, one per user.
    Deadband {
        activity: MotionKind,
        jnd_c: f64,
        floor_eps: f64,
    },
}

impl Default for HapticSource {
    fn default() -> Self {
        HapticSource::Deadband {
            activity: MotionKind::SinusoidalPush,
            jnd_c: 0.1,
            floor_eps: 1e-3,
        }
    }
}

/// Video on the wire: a table of model parameters, or a boolean switch
/// (`true` selects the default model).
mod video_field {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::VideoModel;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Field {
        Switch(bool),
        Model(VideoModel),
    }

    pub fn serialize<S: Serializer>(v: &Option<VideoModel>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(m) => Field::Model(*m),
            None => Field::Switch(false),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<VideoModel>, D::Error> {
        Ok(match Field::deserialize(d)? {
            Field::Switch(true) => Some(VideoModel::default()),
            Field::Switch(false) => None,
            Field::Model(m) => Some(m),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// User pairs.
    pub users: usize,
    /// Total bandwidth, Hz.
    pub bandwidth_hz: f64,
    pub n_rb: usize,
    /// Scheduling interval, seconds.
    pub tti_s: f64,
    /// Share of RBs reserved for video.
    pub video_pool_frac: f64,
    /// Haptic sampling period, seconds.
    pub ts_s: f64,
    /// Relaxed delay bound, seconds. Haptic packets are dropped once they
    /// have waited this long; `tw_s == ts_s` is the unrelaxed baseline.
    pub tw_s: f64,
    /// Haptic sample size, bytes.
    pub s_p: u32,
    pub haptic: HapticSource,
    /// `None` disables video traffic (`video = false` in TOML).
    #[serde(with = "video_field")]
    pub video: Option<VideoModel>,
    pub channel: ChannelSpec,
    /// Largest per-user dropout ratio that still counts as satisfied.
    pub satisfaction_threshold: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 10,
            bandwidth_hz: 1e7,
            n_rb: 100,
            tti_s: 1e-3,
            video_pool_frac: 0.9,
            ts_s: 1e-3,
            tw_s: 1e-3,
            s_p: 32,
            haptic: HapticSource::default(),
            video: Some(VideoModel::default()),
            channel: ChannelSpec::default(),
            satisfaction_threshold: 1e-5,
            duration_s: 10.0,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.users == 0 {
            return bad("users must be >= 1".into());
        }
        if !(self.bandwidth_hz > 0.0) || self.n_rb == 0 || !(self.tti_s > 0.0) {
            return bad("bandwidth, RB count and TTI must be positive".into());
        }
        if !(self.video_pool_frac > 0.0 && self.video_pool_frac < 1.0) {
            return bad(format!("video_pool_frac must be in (0,1), got {}", self.video_pool_frac));
        }
        if self.haptic_rbs() < 1 || self.haptic_rbs() >= self.n_rb {
            return bad("both RB pools must hold at least one RB".into());
        }
        if (self.ts_s - self.tti_s).abs() > 1e-12 * self.tti_s {
            return bad(format!(
                "sampling period {} s must equal the TTI {} s",
                self.ts_s, self.tti_s
            ));
        }
        if self.tw_s + 1e-12 < self.ts_s {
            return bad(format!("Tw = {} s is below Ts = {} s", self.tw_s, self.ts_s));
        }
        if self.s_p == 0 {
            return bad("s_p must be > 0".into());
        }
        if let HapticSource::Deadband { jnd_c, floor_eps, .. } = self.haptic {
            crate::deadband::DeadbandConfig::new(jnd_c, floor_eps)?;
        }
        if let Some(v) = &self.video {
            if !(v.fps > 0.0 && v.mean_bitrate > 0.0 && v.frame_cv >= 0.0 && v.deadline_s > 0.0) {
                return bad("video fps, bitrate and deadline must be positive".into());
            }
        }
        if !(self.duration_s > 0.0) {
            return bad("duration must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.satisfaction_threshold) {
            return bad("satisfaction threshold must be in [0,1]".into());
        }
        match &self.channel {
            ChannelSpec::Fixed { se } if !(*se >= 0.0) => bad("fixed se must be >= 0".into()),
            ChannelSpec::Synthetic(p) if !(p.se_cap > 0.0) || p.shadowing_block == 0 => {
                bad("synthetic channel needs se_cap > 0 and shadowing_block >= 1".into())
            }
            _ => Ok(()),
        }
    }

    pub fn haptic_rbs(&self) -> usize {
        ((1.0 - self.video_pool_frac) * self.n_rb as f64).round() as usize
    }

    pub fn video_rbs(&self) -> usize {
        self.n_rb - self.haptic_rbs()
    }

    pub fn n_ticks(&self) -> usize {
        floor_ratio(self.duration_s, self.tti_s) as usize
    }

    /// Relaxed bound in TTIs.
    pub fn tw_ticks(&self) -> u64 {
        floor_ratio(self.tw_s, self.tti_s).max(1)
    }

    pub fn video_deadline_ticks(&self) -> u64 {
        self.video
            .map(|v| floor_ratio(v.deadline_s, self.tti_s).max(1))
            .unwrap_or(1)
    }

    /// Payload of one RB at spectral efficiency `se`, bytes.
    pub fn rb_payload_bytes(&self, se: f64) -> u32 {
        let bits = se * (self.bandwidth_hz / self.n_rb as f64) * self.tti_s;
        ((bits / 8.0) + 1e-9).floor().max(0.0) as u32
    }
}
