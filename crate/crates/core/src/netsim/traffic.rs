//! Haptic and video traffic sources, and haptic batching.

use std::collections::VecDeque;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HapticSource, SimConfig, VideoModel};
use crate::deadband::{DeadbandConfig, DeadbandState};
use crate::error::Result;
use crate::queueing::plan_batch;
use crate::trace::{synth_trace, HapticTrace, SynthParams};

// Streams of the per-user RNGs, kept apart so sources never share draws.
const STREAM_TRACE: u64 = 1 << 32;
const STREAM_VIDEO: u64 = 2 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    HapticBatch,
    VideoChunk,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub owner: usize,
    pub kind: PacketKind,
    pub size: u32,
    /// Tick the packet entered the base-station queue.
    pub created: u64,
    /// First tick at which the packet is no longer transmittable.
    pub deadline: u64,
    /// Creation ticks of the carried haptic samples (empty for video).
    pub sample_ticks: Vec<u64>,
}

impl Packet {
    pub fn n_samples(&self) -> usize {
        self.sample_ticks.len()
    }
}

/// Per-tick haptic sample arrivals of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct HapticStream {
    pub sent: Vec<bool>,
    /// True when the trace was shorter than the run and was repeated.
    pub wrapped: bool,
}

impl HapticStream {
    pub fn generated(&self) -> usize {
        self.sent.iter().filter(|&&s| s).count()
    }
}

/// Deadband-code `trace` into per-tick arrivals, starting at `offset` and
/// wrapping cyclically when the run outlasts the trace.
pub fn gen_haptic_traffic(
    trace: &HapticTrace,
    n_ticks: usize,
    deadband: Option<&DeadbandConfig>,
    offset: usize,
) -> HapticStream {
    let len = trace.len();
    let wrapped = offset + n_ticks > len;
    let mut state = DeadbandState::default();
    let sent = (0..n_ticks)
        .map(|i| match deadband {
            Some(cfg) => state.step(&trace.force((offset + i) % len), cfg),
            None => true,
        })
        .collect();
    HapticStream { sent, wrapped }
}

/// The arrivals of user `user` under `cfg`.
pub fn user_haptic_stream(cfg: &SimConfig, user: usize) -> Result<HapticStream> {
    let n = cfg.n_ticks();
    match cfg.haptic {
        HapticSource::EveryTick => Ok(HapticStream {
            sent: vec![true; n],
            wrapped: false,
        }),
        HapticSource::Deadband {
            activity,
            jnd_c,
            floor_eps,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_TRACE | user as u64);
            let mut params = SynthParams::new(activity, n, rng.random());
            params.ts = cfg.ts_s;
            // Desynchronize users that share the same activity pattern.
            let period_ticks = (params.profile.period_s / cfg.ts_s).round().max(1.0) as usize;
            let offset = rng.random_range(0..period_ticks);
            params.length = n + offset;
            let trace = synth_trace(&params)?;
            let db = DeadbandConfig::new(jnd_c, floor_eps)?;
            Ok(gen_haptic_traffic(&trace, n, Some(&db), offset))
        }
    }
}

/// Haptic streams for file-backed traces: user `u` replays trace
/// `u % traces.len()` from a seeded offset.
pub fn streams_from_traces(
    cfg: &SimConfig,
    traces: &[HapticTrace],
    users: usize,
    deadband: Option<&DeadbandConfig>,
) -> Vec<HapticStream> {
    (0..users)
        .map(|u| {
            let trace = &traces[u % traces.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_TRACE | u as u64);
            let offset = rng.random_range(0..trace.len());
            let s = gen_haptic_traffic(trace, cfg.n_ticks(), deadband, offset);
            if s.wrapped {
                info!("user {u}: trace of {} ticks wraps over a {}-tick run", trace.len(), cfg.n_ticks());
            }
            s
        })
        .collect()
}

/// Batch size used for one user: `floor(Tw / Ts)` if it fits an RB of
/// `s_rb` bytes, else the largest count that fits (at least 1).
pub fn batch_size(cfg: &SimConfig, s_rb: u32) -> Result<u32> {
    let out = plan_batch(cfg.tw_s, cfg.ts_s, cfg.s_p, s_rb)?;
    Ok(out.usable().max(1))
}

/// Accumulates one user's haptic samples into batches.
#[derive(Debug, Clone)]
pub struct Batcher {
    owner: usize,
    max_batch: usize,
    /// Age (ticks) of the oldest pending sample that forces emission.
    flush_age: u64,
    tw_ticks: u64,
    s_p: u32,
    pending: VecDeque<u64>,
}

impl Batcher {
    pub fn new(owner: usize, max_batch: u32, tw_ticks: u64, s_p: u32) -> Self {
        Self {
            owner,
            max_batch: max_batch.max(1) as usize,
            flush_age: tw_ticks.saturating_sub(1),
            tw_ticks,
            s_p,
            pending: VecDeque::new(),
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Add a sample created at `now` (if any) and emit a batch when the
    /// oldest pending sample reaches `Tw - Ts` of age or the batch is full.
    pub fn tick(&mut self, now: u64, arrival: bool) -> Option<Packet> {
        if arrival {
            self.pending.push_back(now);
        }
        let oldest = *self.pending.front()?;
        if self.pending.len() >= self.max_batch || now - oldest >= self.flush_age {
            let n = self.pending.len().min(self.max_batch);
            let sample_ticks: Vec<u64> = self.pending.drain(..n).collect();
            Some(Packet {
                owner: self.owner,
                kind: PacketKind::HapticBatch,
                size: n as u32 * self.s_p,
                created: now,
                deadline: now + self.tw_ticks,
                sample_ticks,
            })
        } else {
            None
        }
    }
}

/// Run a batcher over a whole arrival sequence.
pub fn batch_and_enqueue(stream: &HapticStream, batcher: &mut Batcher) -> Vec<Packet> {
    stream
        .sent
        .iter()
        .enumerate()
        .filter_map(|(n, &a)| batcher.tick(n as u64, a))
        .collect()
}

/// One encoded video frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoFrame {
    pub created: u64,
    pub bytes: u32,
}

/// Frame sizes are normal(mean, cv * mean) truncated at 3 sigma and at 1 byte.
pub struct VideoSource {
    model: VideoModel,
    tti_s: f64,
    phase_s: f64,
    next_frame: u64,
    size: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl VideoSource {
    pub fn new(model: VideoModel, tti_s: f64, seed: u64, user: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_VIDEO | user as u64);
        let phase_s = rng.random_range(0.0..1.0 / model.fps);
        let mean = model.mean_frame_bytes();
        let sigma = model.frame_cv * mean;
        Self {
            model,
            tti_s,
            phase_s,
            next_frame: 0,
            size: (sigma > 0.0).then(|| Normal::new(mean, sigma).expect("sigma > 0")),
            rng,
        }
    }

    fn frame_tick(&self, k: u64) -> u64 {
        ((self.phase_s + k as f64 / self.model.fps) / self.tti_s).floor() as u64
    }

    fn draw_size(&mut self) -> u32 {
        let mean = self.model.mean_frame_bytes();
        let bytes = match &self.size {
            None => mean,
            Some(dist) => {
                let sigma = dist.std_dev();
                loop {
                    let x = dist.sample(&mut self.rng);
                    if (x - mean).abs() <= 3.0 * sigma && x >= 1.0 {
                        break x;
                    }
                }
            }
        };
        bytes.round().max(1.0) as u32
    }

    /// Frames created at tick `now` (call with consecutive ticks).
    pub fn frames_at(&mut self, now: u64) -> Vec<VideoFrame> {
        let mut out = Vec::new();
        while self.frame_tick(self.next_frame) <= now {
            let created = self.frame_tick(self.next_frame);
            self.next_frame += 1;
            let bytes = self.draw_size();
            out.push(VideoFrame { created, bytes });
        }
        out
    }
}

impl Iterator for VideoSource {
    type Item = VideoFrame;

    fn next(&mut self) -> Option<VideoFrame> {
        let created = self.frame_tick(self.next_frame);
        self.next_frame += 1;
        let bytes = self.draw_size();
        Some(VideoFrame { created, bytes })
    }
}

/// Split a frame into chunks of at most `chunk_bytes`.
pub fn fragment(frame: &VideoFrame, owner: usize, chunk_bytes: u32, deadline_ticks: u64) -> Vec<Packet> {
    let chunk = chunk_bytes.max(1);
    let mut left = frame.bytes;
    let mut out = Vec::with_capacity(frame.bytes.div_ceil(chunk) as usize);
    while left > 0 {
        let size = left.min(chunk);
        left -= size;
        out.push(Packet {
            owner,
            kind: PacketKind::VideoChunk,
            size,
            created: frame.created,
            deadline: frame.created + deadline_ticks,
            sample_ticks: Vec::new(),
        });
    }
    out
}

/// Video packets of one user over `n_ticks`, fragmented to `chunk_bytes`.
pub fn gen_video_traffic(cfg: &SimConfig, user: usize, seed: u64, chunk_bytes: u32) -> Vec<Packet> {
    let Some(model) = cfg.video else {
        return Vec::new();
    };
    let n = cfg.n_ticks() as u64;
    let deadline = cfg.video_deadline_ticks();
    VideoSource::new(model, cfg.tti_s, seed, user)
        .take_while(|f| f.created < n)
        .flat_map(|f| fragment(&f, user, chunk_bytes, deadline))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Activity;

    fn stream(bits: &[bool]) -> HapticStream {
        HapticStream {
            sent: bits.to_vec(),
            wrapped: false,
        }
    }

    #[test]
    fn baseline_batches_are_single_samples() {
        let mut b = Batcher::new(0, 1, 1, 32);
        let pk = batch_and_enqueue(&stream(&[true; 5]), &mut b);
        assert_eq!(pk.len(), 5);
        for (i, p) in pk.iter().enumerate() {
            assert_eq!(p.created, i as u64);
            assert_eq!(p.deadline, i as u64 + 1);
            assert_eq!(p.n_samples(), 1);
            assert_eq!(p.size, 32);
        }
    }

    #[test]
    fn dense_traffic_fills_batches() {
        let mut b = Batcher::new(0, 10, 10, 4);
        let pk = batch_and_enqueue(&stream(&[true; 100]), &mut b);
        assert_eq!(pk.len(), 10);
        assert!(pk.iter().all(|p| p.n_samples() == 10 && p.size == 40));
        assert_eq!(pk[0].created, 9);
        assert_eq!(pk[0].sample_ticks, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sparse_traffic_flushes_at_age_nine() {
        // One sample every 25 ms, Tw = 10 ms.
        let bits: Vec<bool> = (0..200).map(|i| i % 25 == 0).collect();
        let mut b = Batcher::new(0, 10, 10, 32);
        let pk = batch_and_enqueue(&stream(&bits), &mut b);
        assert_eq!(pk.len(), 8);
        for p in &pk {
            assert_eq!(p.n_samples(), 1);
            assert_eq!(p.created - p.sample_ticks[0], 9);
            assert_eq!(p.deadline, p.created + 10);
        }
    }

    #[test]
    fn disabled_deadband_sends_every_tick_and_constant_sends_once() {
        let n = 50;
        let tr = HapticTrace::from_rows(
            Activity::Synthetic,
            1e-3,
            vec![[1.0, 2.0, 3.0]; n],
            vec![([0.0; 3], [0.0; 3]); n],
        )
        .unwrap();
        assert_eq!(gen_haptic_traffic(&tr, n, None, 0).generated(), n);
        let db = DeadbandConfig::default();
        assert_eq!(gen_haptic_traffic(&tr, n, Some(&db), 0).generated(), 1);
        let s = gen_haptic_traffic(&tr, 2 * n, Some(&db), 10);
        assert!(s.wrapped);
    }

    #[test]
    fn strictly_varying_trace_with_tiny_c_sends_every_tick() {
        let n = 300;
        let forces = (0..n).map(|i| [1.0 + i as f64 * 0.01, 0.0, 0.0]).collect();
        let tr = HapticTrace::from_rows(Activity::Synthetic, 1e-3, forces, vec![([0.0; 3], [0.0; 3]); n])
            .unwrap();
        let db = DeadbandConfig {
            c: 1e-9,
            floor_eps: 0.0,
        };
        assert_eq!(gen_haptic_traffic(&tr, n, Some(&db), 0).generated(), n);
    }

    #[test]
    fn video_frame_sizes() {
        let model = VideoModel {
            fps: 60.0,
            mean_bitrate: 2e6,
            frame_cv: 0.0,
            deadline_s: 0.016,
        };
        assert!((model.mean_frame_bytes() - 4166.67).abs() < 0.01);
        let frames: Vec<_> = VideoSource::new(model, 1e-3, 1, 0).take(100).collect();
        assert!(frames.iter().all(|f| f.bytes == 4167));
        assert!(frames.windows(2).all(|w| w[1].created >= w[0].created));
        let ch = fragment(&frames[0], 0, 50, 16);
        assert_eq!(ch.len(), 84);
        assert_eq!(ch.iter().map(|p| p.size).sum::<u32>(), 4167);
        assert_eq!(ch.last().unwrap().size, 17);
    }

    #[test]
    fn frame_times_follow_fps() {
        let model = VideoModel {
            fps: 50.0,
            ..VideoModel::default()
        };
        let mut src = VideoSource::new(model, 1e-3, 3, 2);
        let mut count = 0;
        for now in 0..1000 {
            count += src.frames_at(now).len();
        }
        assert_eq!(count, 50);
    }
}
