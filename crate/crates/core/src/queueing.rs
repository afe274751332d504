//! M/M/1 delay-violation model and batch sizing under a relaxed delay bound.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueModel {
    /// Arrival rate, packets/s.
    pub lambda: f64,
    /// Service rate, packets/s.
    pub mu: f64,
}

impl QueueModel {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(mu > 0.0) {
            return Err(Error::Range(format!(
                "need lambda >= 0 and mu > 0, got lambda={lambda}, mu={mu}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    /// Model with service rate `mu` at utilization `rho`.
    pub fn from_rho(rho: f64, mu: f64) -> Result<Self> {
        Self::new(rho * mu, mu)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    fn check_stable(&self) -> Result<()> {
        let rho = self.rho();
        if rho >= 1.0 {
            Err(Error::Unstable(rho))
        } else {
            Ok(())
        }
    }
}

/// `P(D_q > D_max) = exp(-mu (1 - rho) D_max)`, clamped to `[0, 1]`.
pub fn delay_violation_probability(model: &QueueModel, d_max: f64) -> Result<f64> {
    model.check_stable()?;
    if !(d_max >= 0.0) {
        return Err(Error::Range(format!("D_max must be >= 0, got {d_max}")));
    }
    let p = (-model.mu * (1.0 - model.rho()) * d_max).exp();
    Ok(p.clamp(0.0, 1.0))
}

/// Smallest delay bound whose violation probability equals `target`.
pub fn required_dmax(model: &QueueModel, target: f64) -> Result<f64> {
    model.check_stable()?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Range(format!(
            "target probability must be in (0, 1], got {target}"
        )));
    }
    // -ln(1) is -0.0; report a clean zero.
    Ok((-target.ln() / (model.mu * (1.0 - model.rho()))).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPlan {
    /// Relaxed delay bound, seconds.
    pub tw: f64,
    /// Sampling period, seconds.
    pub ts: f64,
    /// Haptic packet size, bytes.
    pub s_p: u32,
    /// Resource-block payload, bytes.
    pub s_rb: u32,
    /// Batch size `floor(Tw / Ts)`.
    pub p: u32,
}

impl BatchPlan {
    pub fn bytes(&self) -> u64 {
        self.p as u64 * self.s_p as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchOutcome {
    Feasible(BatchPlan),
    /// The full batch does not fit one RB; `fallback` is the largest count
    /// that does (may be 0 when even one packet exceeds the RB).
    Infeasible { plan: BatchPlan, fallback: u32 },
}

impl BatchOutcome {
    pub fn plan(&self) -> &BatchPlan {
        match self {
            BatchOutcome::Feasible(p) => p,
            BatchOutcome::Infeasible { plan, .. } => plan,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, BatchOutcome::Feasible(_))
    }

    /// Batch size actually usable within one RB.
    pub fn usable(&self) -> u32 {
        match self {
            BatchOutcome::Feasible(p) => p.p,
            BatchOutcome::Infeasible { fallback, .. } => *fallback,
        }
    }
}

/// `floor(x / y)` for ratios that should be integral but carry float noise
/// (e.g. 0.003 / 0.001 = 2.9999999999999996).
pub(crate) fn floor_ratio(x: f64, y: f64) -> u64 {
    let r = x / y;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as u64
    } else {
        r.floor() as u64
    }
}

pub fn plan_batch(tw: f64, ts: f64, s_p: u32, s_rb: u32) -> Result<BatchOutcome> {
    if !(ts > 0.0) || s_p == 0 {
        return Err(Error::Range(format!(
            "need Ts > 0 and s_p > 0, got Ts={ts}, s_p={s_p}"
        )));
    }
    let p = floor_ratio(tw, ts);
    if p < 1 {
        return Err(Error::Range(format!(
            "relaxed bound Tw={tw} s is shorter than one sampling period Ts={ts} s"
        )));
    }
    let plan = BatchPlan {
        tw,
        ts,
        s_p,
        s_rb,
        p: p as u32,
    };
    if plan.bytes() <= s_rb as u64 {
        Ok(BatchOutcome::Feasible(plan))
    } else {
        Ok(BatchOutcome::Infeasible {
            plan,
            fallback: s_rb / s_p,
        })
    }
}
