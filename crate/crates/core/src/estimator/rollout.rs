//! Autoregressive multi-step estimation and the comparison baselines.
//!
//! At step `k` (1-based) the window ends at tick `t + k - 1`. Its force rows
//! for ticks after `t` are earlier predictions; command rows are always the
//! recorded commands.

use ndarray::Array2;

use super::model::ForceEstimator;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::trace::{HapticTrace, Vec3, WindowTensor, N_CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Estimates of `f[t+1] ..= f[t+K]`.
    pub predictions: Vec<Vec3>,
    /// Recorded forces for the same ticks, when available.
    pub truth: Option<Vec<Vec3>>,
}

impl RolloutResult {
    pub fn horizon(&self) -> usize {
        self.predictions.len()
    }

    /// Euclidean error per step.
    pub fn per_step_error(&self) -> Option<Vec<f64>> {
        self.truth.as_ref().map(|truth| {
            truth
                .iter()
                .zip(&self.predictions)
                .map(|(a, b)| {
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
                })
                .collect()
        })
    }
}

fn check_rollout(trace: &HapticTrace, t: usize, k: usize, window: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Range("horizon K must be >= 1".into()));
    }
    if t + 1 < window {
        return Err(Error::InsufficientHistory {
            t,
            needed: window - 1,
        });
    }
    if t + k >= trace.len() {
        return Err(Error::Range(format!(
            "rollout to tick {} needs commands beyond trace length {}",
            t + k,
            trace.len()
        )));
    }
    Ok(())
}

fn truth(trace: &HapticTrace, t: usize, k: usize) -> Vec<Vec3> {
    (1..=k).map(|j| trace.force(t + j)).collect()
}

/// Input window for rollout step `step` (1-based) given the predictions so far.
pub fn rollout_window(
    trace: &HapticTrace,
    t: usize,
    step: usize,
    window: usize,
    predictions: &[Vec3],
) -> WindowTensor {
    let end = t + step - 1;
    let start = end + 1 - window;
    let mut values = Array2::zeros((window, N_CHANNELS));
    for (r, mut row) in values.rows_mut().into_iter().enumerate() {
        let tick = start + r;
        let mut vals = trace.row(tick);
        if tick > t {
            vals[..3].copy_from_slice(&predictions[tick - t - 1]);
        }
        for (dst, src) in row.iter_mut().zip(vals) {
            *dst = src;
        }
    }
    WindowTensor { values }
}

pub fn rollout<E: ForceEstimator + ?Sized>(
    trace: &HapticTrace,
    t: usize,
    k: usize,
    estimator: &E,
) -> Result<RolloutResult> {
    let window = estimator.window_len();
    check_rollout(trace, t, k, window)?;
    let mut predictions = Vec::with_capacity(k);
    for step in 1..=k {
        let x = rollout_window(trace, t, step, window, &predictions);
        predictions.push(estimator.predict(&x)?);
    }
    Ok(RolloutResult {
        predictions,
        truth: Some(truth(trace, t, k)),
    })
}

/// Zero-order hold: repeat `f[t]`.
pub fn baseline_zoh(trace: &HapticTrace, t: usize, k: usize) -> Result<RolloutResult> {
    check_rollout(trace, t, k, 1)?;
    Ok(RolloutResult {
        predictions: vec![trace.force(t); k],
        truth: Some(truth(trace, t, k)),
    })
}

/// Linear extrapolation `f[t] + k (f[t] - f[t-1])`.
pub fn baseline_linear(trace: &HapticTrace, t: usize, k: usize) -> Result<RolloutResult> {
    check_rollout(trace, t, k, 2)?;
    let f = trace.force(t);
    let p = trace.force(t - 1);
    let predictions = (1..=k)
        .map(|j| {
            let j = j as f64;
            [
                f[0] + j * (f[0] - p[0]),
                f[1] + j * (f[1] - p[1]),
                f[2] + j * (f[2] - p[2]),
            ]
        })
        .collect();
    Ok(RolloutResult {
        predictions,
        truth: Some(truth(trace, t, k)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMse {
    pub per_axis: Vec3,
    pub mean: f64,
}

pub fn mse_per_axis(truth: &[Vec3], pred: &[Vec3]) -> Result<AxisMse> {
    if truth.len() != pred.len() {
        return Err(Error::Schema(format!(
            "length mismatch: {} true vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Range("MSE needs at least one sample".into()));
    }
    let mut acc = [0.0; 3];
    for (a, b) in truth.iter().zip(pred) {
        for j in 0..3 {
            acc[j] += (a[j] - b[j]).powi(2);
        }
    }
    let n = truth.len() as f64;
    let per_axis = [acc[0] / n, acc[1] / n, acc[2] / n];
    Ok(AxisMse {
        per_axis,
        mean: (per_axis[0] + per_axis[1] + per_axis[2]) / 3.0,
    })
}

/// Largest `K` such that horizons `1..=K` all stay within `eps_th`.
pub fn max_horizon_for_threshold(error_profile: &[f64], eps_th: f64) -> usize {
    error_profile.iter().take_while(|&&e| e <= eps_th).count()
}

/// Default error threshold: 5% of the largest per-axis force range.
pub fn default_eps_th(trace: &HapticTrace) -> f64 {
    let r = trace.force_range();
    0.05 * r[0].max(r[1]).max(r[2])
}

/// Rollout start ticks for an evaluation sweep.
pub fn start_points(trace_len: usize, window: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let first = window.max(2) - 1;
    if trace_len <= first + horizon {
        return Vec::new();
    }
    (first..trace_len - horizon).step_by(stride.max(1)).collect()
}

/// Per-horizon MSE of one method, averaged over rollout start points.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProfile {
    /// Entry `h - 1` holds the MSE at horizon `h`.
    pub mse: Vec<AxisMse>,
}

impl HorizonProfile {
    pub fn mean_profile(&self) -> Vec<f64> {
        self.mse.iter().map(|m| m.mean).collect()
    }

    /// Root of the summed per-axis MSE, i.e. RMS error norm, per horizon.
    pub fn rms_norm_profile(&self) -> Vec<f64> {
        self.mse.iter().map(|m| (m.per_axis.iter().sum::<f64>()).sqrt()).collect()
    }
}

/// Evaluate `rollout_fn` at every start point and aggregate MSE per horizon.
pub fn horizon_profile<F>(
    exec: Execution,
    starts: &[usize],
    horizon: usize,
    rollout_fn: F,
) -> Result<HorizonProfile>
where
    F: Fn(usize) -> Result<RolloutResult> + Sync + Send,
{
    if starts.is_empty() {
        return Err(Error::Range("no rollout start points fit in the trace".into()));
    }
    let runs: Vec<Result<RolloutResult>> = par::map(exec, starts, |&t| rollout_fn(t));
    let mut truth_by_h = vec![Vec::with_capacity(starts.len()); horizon];
    let mut pred_by_h = vec![Vec::with_capacity(starts.len()); horizon];
    for run in runs {
        let run = run?;
        let truth = run.truth.as_ref().expect("rollouts carry ground truth");
        for h in 0..horizon {
            truth_by_h[h].push(truth[h]);
            pred_by_h[h].push(run.predictions[h]);
        }
    }
    let mse = truth_by_h
        .iter()
        .zip(&pred_by_h)
        .map(|(a, b)| mse_per_axis(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(HorizonProfile { mse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::model::LastForceEcho;
    use crate::trace::Activity;

    fn trace_from(forces: Vec<Vec3>) -> HapticTrace {
        let n = forces.len();
        let commands = (0..n).map(|i| ([i as f64, 0.0, 0.0], [1.0, 0.0, 0.0])).collect();
        HapticTrace::from_rows(Activity::Synthetic, 1e-3, forces, commands).unwrap()
    }

    #[test]
    fn mse_examples() {
        let m = mse_per_axis(&[[1.0, 2.0, 3.0]], &[[0.0, 2.0, 3.0]]).unwrap();
        assert_eq!(m.per_axis, [1.0, 0.0, 0.0]);
        assert_eq!(m.mean, 1.0 / 3.0);
        let xs = vec![[1.0, -2.0, 0.5]; 4];
        assert_eq!(mse_per_axis(&xs, &xs).unwrap().per_axis, [0.0; 3]);
        assert!(matches!(mse_per_axis(&xs, &xs[..3]), Err(Error::Schema(_))));
    }

    #[test]
    fn horizon_prefix_rule() {
        assert_eq!(max_horizon_for_threshold(&[0.1, 0.2, 0.5], 0.3), 2);
        assert_eq!(max_horizon_for_threshold(&[0.1, 0.2], 0.3), 2);
        assert_eq!(max_horizon_for_threshold(&[0.1, 0.4, 0.2], 0.3), 1);
        assert_eq!(max_horizon_for_threshold(&[0.5], 0.3), 0);
    }

    #[test]
    fn baselines_on_constant_and_linear() {
        let c = trace_from(vec![[2.0, -1.0, 0.5]; 50]);
        for r in [baseline_zoh(&c, 10, 5).unwrap(), baseline_linear(&c, 10, 5).unwrap()] {
            assert!(r.per_step_error().unwrap().iter().all(|&e| e == 0.0));
        }
        let a = 0.25;
        let lin = trace_from((0..50).map(|i| [a * i as f64, 0.0, 0.0]).collect());
        let r = baseline_linear(&lin, 10, 8).unwrap();
        assert!(r.per_step_error().unwrap().iter().all(|&e| e.abs() < 1e-12));
        let z = baseline_zoh(&lin, 10, 8).unwrap();
        for (k, e) in z.per_step_error().unwrap().iter().enumerate() {
            assert!((e - a * (k + 1) as f64).abs() < 1e-12);
        }
        assert!(baseline_linear(&lin, 0, 1).is_err());
    }

    #[test]
    fn rollout_bounds() {
        let tr = trace_from(vec![[0.0; 3]; 20]);
        let e = LastForceEcho { window_len: 5 };
        assert!(rollout(&tr, 3, 1, &e).is_err());
        assert!(rollout(&tr, 4, 15, &e).is_ok());
        assert!(matches!(rollout(&tr, 4, 16, &e), Err(Error::Range(_))));
        assert!(rollout(&tr, 4, 0, &e).is_err());
    }

    #[test]
    fn start_point_grid() {
        assert_eq!(start_points(300, 100, 20, 50), vec![99, 149, 199, 249]);
        assert!(start_points(100, 100, 20, 50).is_empty());
    }
}
