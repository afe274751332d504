//! Capacity: the largest user count at which enough users meet the
//! reliability threshold.

use log::warn;

use super::config::SimConfig;
use super::sim::{run_sim_with, SimInputs, SimMetrics};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const DEFAULT_SATISFIED_FRAC: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPoint {
    pub users: usize,
    pub frac_satisfied: f64,
    pub aggregate_dropout: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Largest passing user count, 0 if none passed.
    pub capacity: usize,
    /// Every evaluated point, ascending in `users`.
    pub points: Vec<CapacityPoint>,
    /// A failing point was followed by a passing one.
    pub non_monotone: bool,
}

fn point(cfg: &SimConfig, inputs: &SimInputs, users: usize, frac: f64) -> Result<CapacityPoint> {
    let cfg = SimConfig {
        users,
        ..cfg.clone()
    };
    let m: SimMetrics = run_sim_with(&cfg, inputs)?;
    debug_assert!(m.conserved() && m.rb_accounting_ok());
    let satisfied = m.satisfied_users(cfg.satisfaction_threshold);
    Ok(CapacityPoint {
        users,
        frac_satisfied: satisfied as f64 / users as f64,
        aggregate_dropout: m.aggregate_dropout,
        passed: satisfied as f64 + 1e-9 >= frac * users as f64,
    })
}

/// Linear scan over `users` (ascending). The scan stops at the first failure
/// whose next candidate also fails. Candidates are evaluated in chunks of the
/// worker count, so a parallel run may simulate a few points past the stop;
/// those are discarded and the result matches a sequential run.
pub fn capacity_search(
    template: &SimConfig,
    users: &[usize],
    satisfied_frac: f64,
    inputs: &SimInputs,
    exec: Execution,
) -> Result<CapacityResult> {
    if users.is_empty() {
        return Err(Error::Range("empty user range".into()));
    }
    if users.windows(2).any(|w| w[0] >= w[1]) || users[0] == 0 {
        return Err(Error::Range("user range must be ascending and start at >= 1".into()));
    }
    if !(satisfied_frac > 0.0 && satisfied_frac <= 1.0) {
        return Err(Error::Range(format!(
            "satisfied fraction must be in (0,1], got {satisfied_frac}"
        )));
    }
    let width = par::chunk_width(exec);
    let mut points = Vec::new();
    let mut non_monotone = false;
    let mut failed_before = false;
    'scan: for chunk in users.chunks(width) {
        let evaluated = par::map(exec, chunk, |&u| point(template, inputs, u, satisfied_frac));
        for p in evaluated {
            let p = p?;
            let passed = p.passed;
            let users_here = p.users;
            points.push(p);
            match (failed_before, passed) {
                (true, false) => break 'scan,
                (true, true) => {
                    warn!("capacity is not monotone in U: an earlier point failed but {users_here} users pass");
                    non_monotone = true;
                    failed_before = false;
                }
                (false, false) => failed_before = true,
                (false, true) => {}
            }
        }
    }
    let capacity = points
        .iter()
        .filter(|p| p.passed)
        .map(|p| p.users)
        .max()
        .unwrap_or(0);
    Ok(CapacityResult {
        capacity,
        points,
        non_monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub tw_s: f64,
    pub result: CapacityResult,
}

/// Capacity for each relaxed bound in `tw_s`, sharing one set of inputs.
pub fn capacity_sweep(
    template: &SimConfig,
    tw_s: &[f64],
    users: &[usize],
    satisfied_frac: f64,
    exec: Execution,
) -> Result<Vec<SweepEntry>> {
    let max_users = *users
        .iter()
        .max()
        .ok_or_else(|| Error::Range("empty user range".into()))?;
    let inputs = SimInputs::prepare(template, max_users, exec)?;
    capacity_sweep_with(template, tw_s, users, satisfied_frac, &inputs, exec)
}

pub fn capacity_sweep_with(
    template: &SimConfig,
    tw_s: &[f64],
    users: &[usize],
    satisfied_frac: f64,
    inputs: &SimInputs,
    exec: Execution,
) -> Result<Vec<SweepEntry>> {
    par::map(exec, tw_s, |&tw| {
        let cfg = SimConfig {
            tw_s: tw,
            ..template.clone()
        };
        capacity_search(&cfg, users, satisfied_frac, inputs, exec).map(|result| SweepEntry { tw_s: tw, result })
    })
    .into_iter()
    .collect()
}
