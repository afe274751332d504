//! Haptic traces: paired force / operator-command time series.
//!
//! Traces are stored per tick. Tick indices are always re-based to 0 so a
//! tick doubles as the position in the sample vectors.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Number of force channels.
pub const N_F: usize = 3;
/// Number of command channels (position + velocity).
pub const N_C: usize = 6;
/// Channels in a window row: `[force(3) | position(3) | velocity(3)]`.
pub const N_CHANNELS: usize = N_F + N_C;

/// Header of the trace CSV format.
pub const TRACE_HEADER: [&str; 10] = ["t", "fx", "fy", "fz", "px", "py", "pz", "vx", "vy", "vz"];

/// Count of sampling periods since the start of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tick(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSample {
    pub t: Tick,
    pub f: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSample {
    pub t: Tick,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activity {
    DynamicPushing,
    DynamicTapping,
    RigidPressHold,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HapticTrace {
    pub activity: Activity,
    /// Sampling period in seconds.
    pub ts: f64,
    pub forces: Vec<ForceSample>,
    pub commands: Vec<CommandSample>,
}

impl HapticTrace {
    /// Build a trace from raw per-tick rows, indexing ticks from 0.
    pub fn from_rows(
        activity: Activity,
        ts: f64,
        forces: Vec<Vec3>,
        commands: Vec<(Vec3, Vec3)>,
    ) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::Range(format!("sampling period must be > 0, got {ts}")));
        }
        if forces.len() != commands.len() {
            return Err(Error::Schema(format!(
                "force/command length mismatch: {} forces, {} commands",
                forces.len(),
                commands.len()
            )));
        }
        let forces = forces
            .into_iter()
            .enumerate()
            .map(|(i, f)| ForceSample { t: Tick(i), f })
            .collect();
        let commands = commands
            .into_iter()
            .enumerate()
            .map(|(i, (position, velocity))| CommandSample {
                t: Tick(i),
                position,
                velocity,
            })
            .collect();
        Ok(Self {
            activity,
            ts,
            forces,
            commands,
        })
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn force(&self, t: usize) -> Vec3 {
        self.forces[t].f
    }

    /// The nine channels of tick `t`.
    pub fn row(&self, t: usize) -> [f64; N_CHANNELS] {
        let f = self.forces[t].f;
        let c = &self.commands[t];
        [
            f[0],
            f[1],
            f[2],
            c.position[0],
            c.position[1],
            c.position[2],
            c.velocity[0],
            c.velocity[1],
            c.velocity[2],
        ]
    }

    pub fn force_values(&self) -> Vec<Vec3> {
        self.forces.iter().map(|s| s.f).collect()
    }

    /// Per-axis `max - min` of the force channels.
    pub fn force_range(&self) -> Vec3 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &self.forces {
            for a in 0..3 {
                lo[a] = lo[a].min(s.f[a]);
                hi[a] = hi[a].max(s.f[a]);
            }
        }
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
    }

    /// Write the trace in the CSV schema.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(TRACE_HEADER)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(10);
            rec.push(i.to_string());
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<trace writer>", e))?;
        Ok(())
    }
}

/// Load a trace CSV (`t,fx,fy,fz,px,py,pz,vx,vy,vz`).
pub fn load_trace(path: impl AsRef<Path>, ts: f64) -> Result<HapticTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, ts)
}

/// Parse a trace from any reader; see [`load_trace`].
pub fn read_trace<R: Read>(reader: R, ts: f64) -> Result<HapticTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::Schema("empty trace file".into())),
        Some(h) => h?,
    };
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != TRACE_HEADER {
        return Err(Error::Schema(format!(
            "bad header {:?}, expected {}",
            got,
            TRACE_HEADER.join(",")
        )));
    }

    let mut forces = Vec::new();
    let mut commands = Vec::new();
    let mut first_tick = None;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let n_fields = rec.iter().filter(|s| !s.trim().is_empty()).count();
        if n_fields == 1 + N_F {
            return Err(Error::Schema(format!(
                "force/command length mismatch at line {line}: row has forces but no commands"
            )));
        }
        if rec.len() != TRACE_HEADER.len() || n_fields != TRACE_HEADER.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", TRACE_HEADER.len(), n_fields),
            });
        }
        let tick: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("tick {:?} is not a non-negative integer", &rec[0]),
        })?;
        let base = *first_tick.get_or_insert(tick);
        if tick != base + forces.len() {
            return Err(Error::Parse {
                line,
                msg: format!("tick {tick} breaks the equispaced sequence"),
            });
        }
        let mut vals = [0.0f64; N_CHANNELS];
        for (j, v) in vals.iter_mut().enumerate() {
            let field = rec[j + 1].trim();
            *v = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column {} value {field:?} is not a number", TRACE_HEADER[j + 1]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("column {} is not finite ({field})", TRACE_HEADER[j + 1]),
                });
            }
        }
        forces.push([vals[0], vals[1], vals[2]]);
        commands.push(([vals[3], vals[4], vals[5]], [vals[6], vals[7], vals[8]]));
    }
    if forces.is_empty() {
        return Err(Error::Schema("trace has a header but no rows".into()));
    }
    HapticTrace::from_rows(Activity::Synthetic, ts, forces, commands)
}

/// Drop `head` samples from the start and `tail` from the end.
pub fn trim_trace(trace: &HapticTrace, head: usize, tail: usize) -> Result<HapticTrace> {
    let n = trace.len();
    if head + tail >= n {
        return Err(Error::Range(format!(
            "cannot trim {head}+{tail} samples from a trace of length {n}"
        )));
    }
    let keep = head..n - tail;
    let forces = trace.forces[keep.clone()].iter().map(|s| s.f).collect();
    let commands = trace.commands[keep]
        .iter()
        .map(|c| (c.position, c.velocity))
        .collect();
    HapticTrace::from_rows(trace.activity, trace.ts, forces, commands)
}

/// `T x 9` input matrix, oldest row first.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTensor {
    pub values: Array2<f64>,
}

impl WindowTensor {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Force columns of the newest row.
    pub fn last_force(&self) -> Vec3 {
        let r = self.values.row(self.values.nrows() - 1);
        [r[0], r[1], r[2]]
    }
}

/// Window of `window_len` ticks ending at (and including) tick `t`.
pub fn build_window(trace: &HapticTrace, t: usize, window_len: usize) -> Result<WindowTensor> {
    if window_len == 0 {
        return Err(Error::Range("window length must be >= 1".into()));
    }
    if t + 1 < window_len {
        return Err(Error::InsufficientHistory {
            t,
            needed: window_len - 1,
        });
    }
    if t >= trace.len() {
        return Err(Error::Range(format!(
            "tick {t} beyond trace of length {}",
            trace.len()
        )));
    }
    let start = t + 1 - window_len;
    let mut values = Array2::zeros((window_len, N_CHANNELS));
    for (r, mut row) in values.rows_mut().into_iter().enumerate() {
        for (dst, src) in row.iter_mut().zip(trace.row(start + r)) {
            *dst = src;
        }
    }
    Ok(WindowTensor { values })
}

/// Per-channel z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_CHANNELS],
            std: [1.0; N_CHANNELS],
        }
    }

    pub fn normalize(&self, channel: usize, x: f64) -> f64 {
        (x - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, z: f64) -> f64 {
        z * self.std[channel] + self.mean[channel]
    }

    pub fn normalize_window(&self, window: &Array2<f64>) -> Array2<f64> {
        let mut out = window.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.normalize(c, *v);
            }
        }
        out
    }
}

/// Result of [`compute_norm_stats`]; `constant[c]` marks channels whose
/// standard deviation was zero and has been replaced by 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub stats: NormStats,
    pub constant: [bool; N_CHANNELS],
}

const CONSTANT_STD: f64 = 1e-12;

pub fn compute_norm_stats(trace: &HapticTrace) -> Result<ChannelStats> {
    if trace.len() < 2 {
        return Err(Error::Range(format!(
            "need at least 2 samples for statistics, got {}",
            trace.len()
        )));
    }
    // Welford
    let mut mean = [0.0; N_CHANNELS];
    let mut m2 = [0.0; N_CHANNELS];
    for i in 0..trace.len() {
        let row = trace.row(i);
        let n = (i + 1) as f64;
        for c in 0..N_CHANNELS {
            let delta = row[c] - mean[c];
            mean[c] += delta / n;
            m2[c] += delta * (row[c] - mean[c]);
        }
    }
    let n = trace.len() as f64;
    let mut std = [0.0; N_CHANNELS];
    let mut constant = [false; N_CHANNELS];
    for c in 0..N_CHANNELS {
        let s = (m2[c] / n).max(0.0).sqrt();
        if s <= CONSTANT_STD {
            constant[c] = true;
            std[c] = 1.0;
        } else {
            std[c] = s;
        }
    }
    Ok(ChannelStats {
        stats: NormStats { mean, std },
        constant,
    })
}

/// Operator motion pattern for synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    /// Smooth sinusoidal pushing against the wall.
    SinusoidalPush,
    /// Short raised-cosine taps separated by free motion.
    PulseTrainTap,
    /// Ramp in, hold, ramp out, rest.
    RampHoldPress,
}

impl MotionKind {
    pub fn activity(self) -> Activity {
        match self {
            MotionKind::SinusoidalPush => Activity::DynamicPushing,
            MotionKind::PulseTrainTap => Activity::DynamicTapping,
            MotionKind::RampHoldPress => Activity::RigidPressHold,
        }
    }
}

/// Per-axis operator position is `-retract + stroke * s(t)` with the shape
/// `s(t)` in `[0, 1]`; the virtual wall sits at 0, so contact happens only
/// while `stroke > retract`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub kind: MotionKind,
    /// Cycle length, seconds.
    pub period_s: f64,
    /// Rest distance from the wall, meters.
    pub retract_m: f64,
    /// Travel towards the wall, meters.
    pub stroke_m: f64,
}

impl MotionProfile {
    pub fn default_for(kind: MotionKind) -> Self {
        match kind {
            MotionKind::SinusoidalPush => Self {
                kind,
                period_s: 1.5,
                retract_m: 0.002,
                stroke_m: 0.010,
            },
            MotionKind::PulseTrainTap => Self {
                kind,
                period_s: 0.5,
                retract_m: 0.002,
                stroke_m: 0.008,
            },
            MotionKind::RampHoldPress => Self {
                kind,
                period_s: 2.0,
                retract_m: 0.001,
                stroke_m: 0.006,
            },
        }
    }

    // Tap width and ramp/hold split as fractions of the period.
    const TAP_DUTY: f64 = 0.2;
    const RAMP_FRAC: f64 = 0.1;
    const HOLD_FRAC: f64 = 0.5;

    /// Shape value in `[0, 1]` at phase `u` in `[0, 1)`.
    fn shape(&self, u: f64) -> f64 {
        match self.kind {
            MotionKind::SinusoidalPush => 0.5 * (1.0 - (2.0 * PI * u).cos()),
            MotionKind::PulseTrainTap => {
                if u < Self::TAP_DUTY {
                    (PI * u / Self::TAP_DUTY).sin().powi(2)
                } else {
                    0.0
                }
            }
            MotionKind::RampHoldPress => {
                let r = Self::RAMP_FRAC;
                let h = Self::HOLD_FRAC;
                if u < r {
                    u / r
                } else if u < r + h {
                    1.0
                } else if u < 2.0 * r + h {
                    1.0 - (u - r - h) / r
                } else {
                    0.0
                }
            }
        }
    }

    /// True when phase `u` is inside the hold plateau of a ramp-hold press.
    pub fn in_hold(&self, u: f64) -> bool {
        self.kind == MotionKind::RampHoldPress
            && (Self::RAMP_FRAC..Self::RAMP_FRAC + Self::HOLD_FRAC).contains(&u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Damping, Ns/m.
    pub b: f64,
    /// Rendered stiffness as a fraction of `k_max = b / Ts`.
    pub stiffness_fraction: f64,
    pub ts: f64,
    pub length: usize,
    pub profile: MotionProfile,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(kind: MotionKind, length: usize, seed: u64) -> Self {
        Self {
            b: 0.5,
            stiffness_fraction: 0.5,
            ts: 1e-3,
            length,
            profile: MotionProfile::default_for(kind),
            seed,
        }
    }

    pub fn k_max(&self) -> f64 {
        self.b / self.ts
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness_fraction * self.k_max()
    }
}

/// Seeded per-axis variation of a synthetic trace.
#[derive(Debug, Clone, Copy)]
struct AxisJitter {
    scale: [f64; 3],
    phase: [f64; 3],
}

/// Simulate a spring-damper virtual wall driven by the chosen operator motion.
pub fn synth_trace(params: &SynthParams) -> Result<HapticTrace> {
    let SynthParams {
        b,
        stiffness_fraction,
        ts,
        length,
        profile,
        seed,
    } = *params;
    if !(ts > 0.0) || !(b > 0.0) {
        return Err(Error::Range(format!("need b > 0 and Ts > 0, got b={b}, Ts={ts}")));
    }
    if !(stiffness_fraction > 0.0) {
        return Err(Error::Range(format!(
            "stiffness fraction must be in (0, 1], got {stiffness_fraction}"
        )));
    }
    let k_max = b / ts;
    let k = stiffness_fraction * k_max;
    if stiffness_fraction > 1.0 {
        return Err(Error::Stability { k, k_max });
    }
    if !(profile.period_s > 0.0) {
        return Err(Error::Range("motion period must be > 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = AxisJitter {
        scale: [
            rng.random_range(0.6..=1.0),
            rng.random_range(0.6..=1.0),
            rng.random_range(0.6..=1.0),
        ],
        phase: [
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ],
    };
    // Press-hold moves all axes together; the other profiles drift per axis.
    let phase = |a: usize| {
        if profile.kind == MotionKind::RampHoldPress {
            0.0
        } else {
            jitter.phase[a]
        }
    };

    let mut forces = Vec::with_capacity(length);
    let mut commands = Vec::with_capacity(length);
    let mut prev_pos: Option<Vec3> = None;
    for i in 0..length {
        let time = i as f64 * ts;
        let mut pos = [0.0; 3];
        for (a, p) in pos.iter_mut().enumerate() {
            let u = (time / profile.period_s + phase(a)).fract();
            *p = -profile.retract_m + profile.stroke_m * jitter.scale[a] * profile.shape(u);
        }
        let vel = match prev_pos {
            None => [0.0; 3],
            Some(pp) => [
                (pos[0] - pp[0]) / ts,
                (pos[1] - pp[1]) / ts,
                (pos[2] - pp[2]) / ts,
            ],
        };
        let mut f = [0.0; 3];
        for a in 0..3 {
            let pen = pos[a];
            if pen > 0.0 {
                f[a] = -k * pen - b * vel[a];
            }
        }
        forces.push(f);
        commands.push((pos, vel));
        prev_pos = Some(pos);
    }
    HapticTrace::from_rows(profile.kind.activity(), ts, forces, commands)
}

/// Phase in `[0, 1)` of tick `i` for axis-synchronous profiles.
pub fn profile_phase(params: &SynthParams, i: usize) -> f64 {
    (i as f64 * params.ts / params.profile.period_s).fract()
}
