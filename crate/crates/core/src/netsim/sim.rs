//! Tick-driven simulation of `U` teleoperation pairs on a shared downlink.

use log::info;

use super::channel::{channel_for, ChannelProfile};
use super::config::SimConfig;
use super::scheduler::{schedule_tti, PoolSizes, UserQueues};
use super::traffic::{
    batch_size, fragment, streams_from_traces, user_haptic_stream, Batcher, HapticStream, PacketKind,
    VideoSource,
};
use crate::deadband::DeadbandConfig;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::trace::HapticTrace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UserMetrics {
    /// Haptic samples generated (`N_g`).
    pub generated: u64,
    pub transmitted: u64,
    /// Haptic samples dropped for exceeding the delay bound (`N_d`).
    pub dropped: u64,
    /// Samples still pending or queued when the run ended.
    pub queued: u64,
}

impl UserMetrics {
    /// `N_d / N_g`, or `None` when nothing was generated.
    pub fn dropout(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.dropped as f64 / self.generated as f64)
    }

    pub fn is_conserved(&self) -> bool {
        self.generated == self.transmitted + self.dropped + self.queued
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VideoMetrics {
    pub chunks_generated: u64,
    pub chunks_transmitted: u64,
    pub chunks_dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub per_user: Vec<UserMetrics>,
    /// Average dropout over users that generated traffic.
    pub aggregate_dropout: f64,
    /// Users left out of the average because they generated nothing.
    pub excluded_users: usize,
    /// Entry `i` counts haptic samples delivered `i` ticks after creation.
    pub delay_histogram: Vec<u64>,
    pub haptic_rb_utilization: f64,
    pub video_rb_utilization: f64,
    /// Largest per-TTI allocation seen in each pool.
    pub max_haptic_rbs: usize,
    pub max_video_rbs: usize,
    pub pools: PoolSizes,
    pub video: VideoMetrics,
    pub ticks: usize,
}

impl SimMetrics {
    pub fn satisfied_users(&self, threshold: f64) -> usize {
        self.per_user
            .iter()
            .filter(|m| m.dropout().is_none_or(|r| r <= threshold))
            .count()
    }

    pub fn satisfied_fraction(&self, threshold: f64) -> f64 {
        self.satisfied_users(threshold) as f64 / self.per_user.len().max(1) as f64
    }

    pub fn conserved(&self) -> bool {
        self.per_user.iter().all(UserMetrics::is_conserved)
    }

    pub fn rb_accounting_ok(&self) -> bool {
        self.max_haptic_rbs <= self.pools.haptic && self.max_video_rbs <= self.pools.video
    }
}

/// Average dropout `(1/U) * sum(N_d / N_g)` over users with `N_g > 0`.
/// Returns the average and the number of excluded users.
pub fn average_dropout(dropped: &[u64], generated: &[u64]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut counted = 0;
    for (&d, &g) in dropped.iter().zip(generated) {
        if g > 0 {
            sum += d as f64 / g as f64;
            counted += 1;
        }
    }
    let excluded = generated.len() - counted;
    if counted == 0 {
        (0.0, excluded)
    } else {
        (sum / counted as f64, excluded)
    }
}

/// Haptic arrivals and channel for up to `users` users; independent of
/// `tw_s`, so one set can back a whole sweep.
#[derive(Debug, Clone)]
pub struct SimInputs {
    pub streams: Vec<HapticStream>,
    pub channel: ChannelProfile,
}

impl SimInputs {
    pub fn prepare(cfg: &SimConfig, users: usize, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let streams = par::map_range(exec, users, |u| user_haptic_stream(cfg, u))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            streams,
            channel: channel_for(cfg, users, exec)?,
        })
    }

    /// Inputs replaying recorded traces instead of synthetic activities.
    pub fn from_traces(
        cfg: &SimConfig,
        traces: &[HapticTrace],
        users: usize,
        deadband: Option<&DeadbandConfig>,
        exec: Execution,
    ) -> Result<Self> {
        cfg.validate()?;
        if traces.is_empty() {
            return Err(Error::Config("no haptic traces supplied".into()));
        }
        Ok(Self {
            streams: streams_from_traces(cfg, traces, users, deadband),
            channel: channel_for(cfg, users, exec)?,
        })
    }
}

pub fn run_sim(cfg: &SimConfig) -> Result<SimMetrics> {
    let inputs = SimInputs::prepare(cfg, cfg.users, Execution::Sequential)?;
    run_sim_with(cfg, &inputs)
}

/// Simulate `cfg.users` users using the first entries of `inputs`.
pub fn run_sim_with(cfg: &SimConfig, inputs: &SimInputs) -> Result<SimMetrics> {
    cfg.validate()?;
    let n_users = cfg.users;
    let n_ticks = cfg.n_ticks();
    if inputs.streams.len() < n_users {
        return Err(Error::Config(format!(
            "inputs prepared for {} users, config asks for {n_users}",
            inputs.streams.len()
        )));
    }
    if !inputs.channel.covers(n_users, n_ticks) {
        return Err(Error::Config("channel profile does not cover the run".into()));
    }
    let channel = &inputs.channel;
    let tw_ticks = cfg.tw_ticks();
    let pools = PoolSizes {
        haptic: cfg.haptic_rbs(),
        video: cfg.video_rbs(),
    };

    let mut batchers = Vec::with_capacity(n_users);
    let mut video = Vec::with_capacity(n_users);
    let mut chunk_bytes = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let nominal = cfg.rb_payload_bytes(channel.mean_se(u, n_ticks));
        let p = batch_size(cfg, nominal)?;
        batchers.push(Batcher::new(u, p, tw_ticks, cfg.s_p));
        chunk_bytes.push(nominal.max(1));
        video.push(cfg.video.map(|m| VideoSource::new(m, cfg.tti_s, cfg.seed, u)));
    }
    let video_deadline = cfg.video_deadline_ticks();

    let mut queues = vec![UserQueues::default(); n_users];
    let mut per_user = vec![UserMetrics::default(); n_users];
    let mut vm = VideoMetrics::default();
    let mut hist = vec![0u64; 2 * tw_ticks as usize + 2];
    let (mut haptic_rbs, mut video_rbs) = (0u64, 0u64);
    let (mut max_h, mut max_v) = (0, 0);

    for n in 0..n_ticks {
        let now = n as u64;
        for u in 0..n_users {
            let arrival = inputs.streams[u].sent[n];
            if arrival {
                per_user[u].generated += 1;
            }
            if let Some(pkt) = batchers[u].tick(now, arrival) {
                queues[u].haptic.push_back(pkt);
            }
            if let Some(src) = video[u].as_mut() {
                for frame in src.frames_at(now) {
                    let chunks = fragment(&frame, u, chunk_bytes[u], video_deadline);
                    vm.chunks_generated += chunks.len() as u64;
                    queues[u].video.extend(chunks);
                }
            }
        }

        let report = schedule_tti(&mut queues, pools, now, |u| {
            cfg.rb_payload_bytes(channel.se_at(u, n))
        });

        for p in &report.dropped {
            match p.kind {
                PacketKind::HapticBatch => per_user[p.owner].dropped += p.n_samples() as u64,
                PacketKind::VideoChunk => vm.chunks_dropped += 1,
            }
        }
        for tx in &report.haptic_tx {
            per_user[tx.user].transmitted += tx.packet.n_samples() as u64;
            for &s in &tx.packet.sample_ticks {
                let d = (now - s) as usize;
                if d >= hist.len() {
                    hist.resize(d + 1, 0);
                }
                hist[d] += 1;
            }
        }
        vm.chunks_transmitted += report.video_tx.len() as u64;
        haptic_rbs += report.haptic_rbs_used as u64;
        video_rbs += report.video_rbs_used as u64;
        max_h = max_h.max(report.haptic_rbs_used);
        max_v = max_v.max(report.video_rbs_used);
    }

    for u in 0..n_users {
        per_user[u].queued = (batchers[u].pending() + queues[u].queued_samples()) as u64;
    }
    let dropped: Vec<u64> = per_user.iter().map(|m| m.dropped).collect();
    let generated: Vec<u64> = per_user.iter().map(|m| m.generated).collect();
    let (aggregate_dropout, excluded_users) = average_dropout(&dropped, &generated);
    if excluded_users > 0 {
        info!("{excluded_users} users generated no haptic samples; excluded from the dropout average");
    }
    let denom = |pool: usize| (pool as f64 * n_ticks.max(1) as f64).max(1.0);
    Ok(SimMetrics {
        per_user,
        aggregate_dropout,
        excluded_users,
        delay_histogram: hist,
        haptic_rb_utilization: haptic_rbs as f64 / denom(pools.haptic),
        video_rb_utilization: video_rbs as f64 / denom(pools.video),
        max_haptic_rbs: max_h,
        max_video_rbs: max_v,
        pools,
        video: vm,
        ticks: n_ticks,
    })
}
