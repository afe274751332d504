//! Monte-Carlo M/M/1 queue used to cross-check the closed-form violation
//! probability.
//!
//! Waiting times follow the Lindley recursion
//! `W[n+1] = max(0, W[n] + S[n] - A[n+1])`. The run is split into a fixed
//! number of independent replications (each on its own RNG stream), so the
//! result does not depend on the thread count.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const MM1_REPLICATIONS: usize = 16;

/// Violation counts at one delay threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mm1Point {
    pub d_max: f64,
    /// Fraction of packets whose wait before service exceeds `d_max`.
    pub wait_violation: f64,
    /// Fraction of packets whose time in system (wait plus service)
    /// exceeds `d_max`.
    pub sojourn_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mm1Result {
    pub lambda: f64,
    pub mu: f64,
    pub packets: u64,
    pub points: Vec<Mm1Point>,
}

#[derive(Default)]
struct Counts {
    wait: Vec<u64>,
    sojourn: Vec<u64>,
    packets: u64,
}

fn replicate(lambda: f64, mu: f64, n: u64, d_max: &[f64], seed: u64, rep: usize) -> Counts {
    let mut c = Counts {
        wait: vec![0; d_max.len()],
        sojourn: vec![0; d_max.len()],
        packets: n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    let service = Exp::new(mu).expect("mu > 0");
    let inter = Exp::new(lambda).expect("lambda > 0");
    let mut wait = 0.0f64;
    for _ in 0..n {
        let s: f64 = service.sample(&mut rng);
        let sojourn = wait + s;
        for (i, &d) in d_max.iter().enumerate() {
            c.wait[i] += u64::from(wait > d);
            c.sojourn[i] += u64::from(sojourn > d);
        }
        let a: f64 = inter.sample(&mut rng);
        wait = (sojourn - a).max(0.0);
    }
    c
}

/// Simulate `packets` arrivals of an M/M/1 queue and report empirical
/// violation fractions at every threshold in `d_max` (seconds).
pub fn run_mm1(
    lambda: f64,
    mu: f64,
    d_max: &[f64],
    packets: u64,
    seed: u64,
    exec: Execution,
) -> Result<Mm1Result> {
    if !(lambda >= 0.0 && lambda.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Range(format!(
            "need lambda >= 0 and mu > 0, got lambda={lambda}, mu={mu}"
        )));
    }
    if let Some(d) = d_max.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::Range(format!("D_max must be >= 0, got {d}")));
    }
    if lambda >= mu {
        warn!("M/M/1 with rho = {} >= 1 is unstable; running anyway", lambda / mu);
    }
    if lambda == 0.0 || packets == 0 {
        return Ok(Mm1Result {
            lambda,
            mu,
            packets: 0,
            points: d_max
                .iter()
                .map(|&d| Mm1Point {
                    d_max: d,
                    wait_violation: 0.0,
                    sojourn_violation: 0.0,
                })
                .collect(),
        });
    }

    let per_rep = |r: usize| {
        let base = packets / MM1_REPLICATIONS as u64;
        base + u64::from((r as u64) < packets % MM1_REPLICATIONS as u64)
    };
    let reps = par::map_range(exec, MM1_REPLICATIONS, |r| {
        replicate(lambda, mu, per_rep(r), d_max, seed, r)
    });
    let mut total = Counts {
        wait: vec![0; d_max.len()],
        sojourn: vec![0; d_max.len()],
        packets: 0,
    };
    for c in reps {
        total.packets += c.packets;
        for i in 0..d_max.len() {
            total.wait[i] += c.wait[i];
            total.sojourn[i] += c.sojourn[i];
        }
    }
    let n = total.packets as f64;
    Ok(Mm1Result {
        lambda,
        mu,
        packets: total.packets,
        points: d_max
            .iter()
            .enumerate()
            .map(|(i, &d)| Mm1Point {
                d_max: d,
                wait_violation: total.wait[i] as f64 / n,
                sojourn_violation: total.sojourn[i] as f64 / n,
            })
            .collect(),
    })
}
