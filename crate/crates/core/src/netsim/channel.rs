//! Per-user, per-TTI spectral efficiency profiles.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::{ChannelSpec, FadingParams, SimConfig};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    Fixed,
    File,
    Synthetic,
}

/// Spectral efficiency lookup, bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub source: ChannelSource,
    users: usize,
    ttis: usize,
    /// `users x ttis`, row-major; a single entry for fixed profiles.
    se: Vec<f64>,
}

impl ChannelProfile {
    pub fn fixed(se: f64) -> Self {
        Self {
            source: ChannelSource::Fixed,
            users: usize::MAX,
            ttis: usize::MAX,
            se: vec![se],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn ttis(&self) -> usize {
        self.ttis
    }

    pub fn covers(&self, users: usize, ttis: usize) -> bool {
        self.users >= users && self.ttis >= ttis
    }

    pub fn se(&self, user: usize, tti: usize) -> Result<f64> {
        if self.source == ChannelSource::Fixed {
            return Ok(self.se[0]);
        }
        if user >= self.users || tti >= self.ttis {
            return Err(Error::Config(format!(
                "channel profile undefined at user {user}, tti {tti} ({} users x {} ttis)",
                self.users, self.ttis
            )));
        }
        Ok(self.se[user * self.ttis + tti])
    }

    /// Unchecked lookup for the simulator hot loop; coverage is validated
    /// once before the run.
    pub(crate) fn se_at(&self, user: usize, tti: usize) -> f64 {
        if self.source == ChannelSource::Fixed {
            self.se[0]
        } else {
            self.se[user * self.ttis + tti]
        }
    }

    /// Mean spectral efficiency of one user over the first `ttis` TTIs.
    pub fn mean_se(&self, user: usize, ttis: usize) -> f64 {
        if self.source == ChannelSource::Fixed {
            return self.se[0];
        }
        let n = ttis.min(self.ttis).max(1);
        let row = &self.se[user * self.ttis..user * self.ttis + n];
        row.iter().sum::<f64>() / n as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(["user", "tti", "se"])?;
        for u in 0..self.users {
            for t in 0..self.ttis {
                wtr.write_record(&[u.to_string(), t.to_string(), self.se_at(u, t).to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<channel writer>", e))?;
        Ok(())
    }
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<ChannelProfile> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_channel(f)
}

/// Parse a `user,tti,se` CSV. Every (user, tti) pair of the bounding grid
/// must appear exactly once.
pub fn read_channel<R: Read>(reader: R) -> Result<ChannelProfile> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["user", "tti", "se"] {
        return Err(Error::Schema(format!("bad channel header {header:?}, expected user,tti,se")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let parse_err = |what: &str| Error::Parse {
            line,
            msg: format!("bad {what} value"),
        };
        let u: usize = rec[0].trim().parse().map_err(|_| parse_err("user"))?;
        let t: usize = rec[1].trim().parse().map_err(|_| parse_err("tti"))?;
        let se: f64 = rec[2].trim().parse().map_err(|_| parse_err("se"))?;
        if !(se.is_finite() && se >= 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("spectral efficiency {se} out of range"),
            });
        }
        rows.push((u, t, se));
    }
    if rows.is_empty() {
        return Err(Error::Schema("channel file has no rows".into()));
    }
    let users = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let ttis = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let mut se = vec![f64::NAN; users * ttis];
    for (u, t, v) in rows {
        let slot = &mut se[u * ttis + t];
        if !slot.is_nan() {
            return Err(Error::Schema(format!("duplicate channel entry user {u}, tti {t}")));
        }
        *slot = v;
    }
    if let Some(i) = se.iter().position(|v| v.is_nan()) {
        return Err(Error::Schema(format!(
            "channel file misses user {}, tti {}",
            i / ttis,
            i % ttis
        )));
    }
    Ok(ChannelProfile {
        source: ChannelSource::File,
        users,
        ttis,
        se,
    })
}

/// Power gain `|h|^2` of a unit-mean Rician channel.
fn rician_gain(k: f64, rng: &mut ChaCha8Rng) -> f64 {
    if k.is_infinite() {
        return 1.0;
    }
    let los = (k / (k + 1.0)).sqrt();
    let nlos = (1.0 / (2.0 * (k + 1.0))).sqrt();
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    (los + nlos * x).powi(2) + (nlos * y).powi(2)
}

/// Spectral efficiency trace of one user; independent per `(seed, user)`.
pub fn synth_user_channel(user: usize, ttis: usize, seed: u64, p: &FadingParams) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    let (lo, hi) = p.mean_snr_db_range;
    let mean_db = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let shadow = Normal::new(0.0, p.shadowing_sigma_db.max(0.0)).expect("sigma >= 0");
    let mut shadow_db = 0.0;
    (0..ttis)
        .map(|t| {
            if t % p.shadowing_block == 0 {
                shadow_db = if p.shadowing_sigma_db > 0.0 {
                    shadow.sample(&mut rng)
                } else {
                    0.0
                };
            }
            let snr = 10f64.powf((mean_db + shadow_db) / 10.0) * rician_gain(p.rician_k, &mut rng);
            (1.0 + snr).log2().min(p.se_cap).max(f64::MIN_POSITIVE)
        })
        .collect()
}

pub fn synth_channel(
    users: usize,
    duration_s: f64,
    tti_s: f64,
    seed: u64,
    params: &FadingParams,
    exec: Execution,
) -> ChannelProfile {
    let ttis = crate::queueing::floor_ratio(duration_s, tti_s) as usize;
    let rows = par::map_range(exec, users, |u| synth_user_channel(u, ttis, seed, params));
    ChannelProfile {
        source: ChannelSource::Synthetic,
        users,
        ttis,
        se: rows.concat(),
    }
}

/// Build the profile a config asks for, covering `users` and the run length.
pub fn channel_for(cfg: &SimConfig, users: usize, exec: Execution) -> Result<ChannelProfile> {
    let profile = match &cfg.channel {
        ChannelSpec::Fixed { se } => ChannelProfile::fixed(*se),
        ChannelSpec::Synthetic(p) => synth_channel(users, cfg.duration_s, cfg.tti_s, cfg.seed, p, exec),
        ChannelSpec::File { path } => load_channel(path)?,
    };
    if !profile.covers(users, cfg.n_ticks()) {
        return Err(Error::Config(format!(
            "channel profile covers {} users x {} ttis, run needs {users} x {}",
            profile.users,
            profile.ttis,
            cfg.n_ticks()
        )));
    }
    Ok(profile)
}

/// RB payload for `user` at `tti`: `floor(se * (B / n_rb) * tti / 8)` bytes.
pub fn rb_payload(profile: &ChannelProfile, user: usize, tti: usize, cfg: &SimConfig) -> Result<u32> {
    Ok(cfg.rb_payload_bytes(profile.se(user, tti)?))
}
