//! Weber-law perceptual deadband coding of 3-axis force streams.
//!
//! A sample is sent when its change from the last sent sample exceeds
//! `max(c * |last|, floor_eps)` in the Euclidean norm. Receivers hold the
//! last value (zero-order hold).

use crate::error::{Error, Result};
use crate::trace::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadbandConfig {
    /// JND ratio.
    pub c: f64,
    /// Absolute threshold near zero force, newtons.
    pub floor_eps: f64,
}

impl Default for DeadbandConfig {
    fn default() -> Self {
        Self {
            c: 0.1,
            floor_eps: 1e-3,
        }
    }
}

impl DeadbandConfig {
    pub fn new(c: f64, floor_eps: f64) -> Result<Self> {
        let cfg = Self { c, floor_eps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Range(format!("JND constant must be in (0,1), got {}", self.c)));
        }
        if !(self.floor_eps >= 0.0) {
            return Err(Error::Range(format!(
                "floor_eps must be >= 0, got {}",
                self.floor_eps
            )));
        }
        Ok(())
    }

    /// Perceptual threshold around a held value.
    pub fn threshold(&self, held: &Vec3) -> f64 {
        (self.c * norm(held)).max(self.floor_eps)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeadbandState {
    pub last_transmitted: Vec3,
    pub initialized: bool,
}

impl DeadbandState {
    /// Decide and, on transmit, record `sample` as the held value.
    pub fn step(&mut self, sample: &Vec3, cfg: &DeadbandConfig) -> bool {
        let send = should_transmit(self, sample, cfg);
        if send {
            self.last_transmitted = *sample;
            self.initialized = true;
        }
        send
    }
}

pub(crate) fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

pub fn should_transmit(state: &DeadbandState, sample: &Vec3, cfg: &DeadbandConfig) -> bool {
    !state.initialized || dist(sample, &state.last_transmitted) > cfg.threshold(&state.last_transmitted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub mask: Vec<bool>,
    pub reduction_ratio: f64,
}

impl Encoded {
    pub fn transmitted_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The samples selected by the mask.
    pub fn select(&self, forces: &[Vec3]) -> Vec<Vec3> {
        forces
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(f, _)| *f)
            .collect()
    }
}

pub fn encode_trace(forces: &[Vec3], cfg: &DeadbandConfig) -> Result<Encoded> {
    if forces.is_empty() {
        return Err(Error::Range("cannot encode an empty sequence".into()));
    }
    let mut state = DeadbandState::default();
    let mask: Vec<bool> = forces.iter().map(|f| state.step(f, cfg)).collect();
    let sent = mask.iter().filter(|&&m| m).count();
    Ok(Encoded {
        reduction_ratio: 1.0 - sent as f64 / forces.len() as f64,
        mask,
    })
}

/// Zero-order-hold reconstruction from a transmit mask and the sent values.
pub fn decode_zoh(mask: &[bool], transmitted: &[Vec3]) -> Result<Vec<Vec3>> {
    let sent = mask.iter().filter(|&&m| m).count();
    if sent != transmitted.len() {
        return Err(Error::Schema(format!(
            "mask selects {sent} samples but {} were transmitted",
            transmitted.len()
        )));
    }
    if mask.first() != Some(&true) {
        return Err(Error::Schema("mask must start with a transmission".into()));
    }
    let mut out = Vec::with_capacity(mask.len());
    let mut next = transmitted.iter();
    let mut held = [0.0; 3];
    for &m in mask {
        if m {
            held = *next.next().expect("count checked above");
        }
        out.push(held);
    }
    Ok(out)
}
