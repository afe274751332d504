use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use tactile_core::deadband::{encode_trace, DeadbandConfig};
use tactile_core::estimator::{
    baseline_linear, baseline_zoh, default_eps_th, horizon_profile, load_weights,
    max_horizon_for_threshold, rollout, start_points, HorizonProfile, Mode, ModelWeights,
};
use tactile_core::netsim::{capacity_sweep, run_mm1, run_sim, synth_channel as synth_profile};
use tactile_core::queueing::{delay_violation_probability, QueueModel};
use tactile_core::trace::{
    compute_norm_stats, load_trace, synth_trace as synth, HapticTrace, MotionKind, NormStats,
    SynthParams,
};
use tactile_core::Execution;

use crate::config::ExperimentConfig;
use crate::output::{write_atomic, write_table, Table};
use crate::{
    ActivityArg, AnalyticArgs, CapacityArgs, DeadbandArgs, EstimateArgs, InitWeightsArgs, Mm1Args,
    ModeArg, SimulateArgs, SynthChannelArgs, SynthTraceArgs,
};

fn pick<T>(flag: Option<T>, file: T) -> T {
    flag.unwrap_or(file)
}

fn load_model(path: Option<&Path>, role: &str, want: Mode) -> Result<ModelWeights> {
    let Some(path) = path else {
        bail!("config error: no {role} weights given (set estimate.{role}_weights or --{role}-weights)");
    };
    let w = load_weights(path).with_context(|| format!("loading {role} weights {}", path.display()))?;
    if w.mode != want {
        log::warn!("{} holds {:?} weights, used as {role}", path.display(), w.mode);
    }
    Ok(w)
}

fn synthetic_trace(cfg: &ExperimentConfig) -> Result<HapticTrace> {
    let s = &cfg.synth_trace;
    let params = SynthParams {
        b: s.damping,
        stiffness_fraction: s.stiffness_fraction,
        ts: cfg.sim.ts_s,
        ..SynthParams::new(s.activity, s.length, cfg.seed())
    };
    synth(&params).context("synthesising trace")
}

fn trace_or_synthetic(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<HapticTrace> {
    match path {
        Some(p) => load_trace(p, cfg.sim.ts_s).with_context(|| format!("loading trace {}", p.display())),
        None => synthetic_trace(cfg),
    }
}

pub fn estimate(mut cfg: ExperimentConfig, a: EstimateArgs, exec: Execution) -> Result<Vec<PathBuf>> {
    let e = &mut cfg.estimate;
    e.mm_weights = a.mm_weights.or(e.mm_weights.take());
    e.fo_weights = a.fo_weights.or(e.fo_weights.take());
    e.trace = a.trace.or(e.trace.take());
    e.horizon = pick(a.horizon, e.horizon);
    e.stride = pick(a.stride, e.stride);
    e.eps_th = a.eps_th.or(e.eps_th);
    let e = &cfg.estimate;
    ensure!(e.horizon >= 1, "range error: horizon must be at least 1, got {}", e.horizon);
    ensure!(e.stride >= 1, "range error: stride must be at least 1");

    let mm = load_model(e.mm_weights.as_deref(), "mm", Mode::MultiModal)?;
    let fo = load_model(e.fo_weights.as_deref(), "fo", Mode::ForceOnly)?;
    let Some(trace_path) = e.trace.as_deref() else {
        bail!("config error: no validation trace given (set estimate.trace or --trace)");
    };
    let trace = load_trace(trace_path, cfg.sim.ts_s)
        .with_context(|| format!("loading trace {}", trace_path.display()))?;

    let k = e.horizon;
    let window = mm.config.window.max(fo.config.window).max(2);
    let starts = start_points(trace.len(), window, k, e.stride);
    ensure!(
        !starts.is_empty(),
        "range error: trace of {} samples is too short for window {window} and horizon {k}",
        trace.len()
    );
    log::info!("{} rollout start points", starts.len());

    let methods: [(&str, HorizonProfile); 4] = [
        ("multimodal", horizon_profile(exec, &starts, k, |t| rollout(&trace, t, k, &mm))?),
        ("force_only", horizon_profile(exec, &starts, k, |t| rollout(&trace, t, k, &fo))?),
        ("zoh", horizon_profile(exec, &starts, k, |t| baseline_zoh(&trace, t, k))?),
        ("linear", horizon_profile(exec, &starts, k, |t| baseline_linear(&trace, t, k))?),
    ];

    let mut header = vec!["horizon_ms".to_string()];
    for (name, _) in &methods {
        for axis in ["fx", "fy", "fz", "mean"] {
            header.push(format!("{name}_{axis}_mse_N2"));
        }
    }
    let mut table = Table::new(header);
    let step_ms = trace.ts * 1e3;
    for h in 0..k {
        let mut row = vec![((h + 1) as f64 * step_ms).to_string()];
        for (_, p) in &methods {
            let m = p.mse[h];
            row.extend(m.per_axis.iter().map(|v| v.to_string()));
            row.push(m.mean.to_string());
        }
        table.push(row);
    }

    let eps_th = e.eps_th.unwrap_or_else(|| default_eps_th(&trace));
    let mut summary = Table::new(["method", "eps_th_N", "max_horizon_steps", "max_horizon_ms"]);
    for (name, p) in &methods {
        let steps = max_horizon_for_threshold(&p.rms_norm_profile(), eps_th);
        summary.push([
            name.to_string(),
            eps_th.to_string(),
            steps.to_string(),
            (steps as f64 * step_ms).to_string(),
        ]);
    }

    let dir = cfg.out_dir();
    Ok(vec![
        write_table(&dir, "estimate.csv", &table)?,
        write_table(&dir, "estimate_summary.csv", &summary)?,
    ])
}

pub fn simulate(mut cfg: ExperimentConfig, a: SimulateArgs, _exec: Execution) -> Result<Vec<PathBuf>> {
    let sim = &mut cfg.sim;
    sim.users = pick(a.users, sim.users);
    sim.tw_s = a.tw_ms.map_or(sim.tw_s, |ms| ms * 1e-3);
    sim.duration_s = pick(a.duration_s, sim.duration_s);
    let m = run_sim(&cfg.sim).context("running simulation")?;

    let mut table = Table::new(["user", "N_g", "N_d", "dropout"]);
    for (u, um) in m.per_user.iter().enumerate() {
        table.push([
            u.to_string(),
            um.generated.to_string(),
            um.dropped.to_string(),
            um.dropout().map(|r| r.to_string()).unwrap_or_default(),
        ]);
    }
    let total_g: u64 = m.per_user.iter().map(|u| u.generated).sum();
    let total_d: u64 = m.per_user.iter().map(|u| u.dropped).sum();
    table.push([
        "aggregate".to_string(),
        total_g.to_string(),
        total_d.to_string(),
        m.aggregate_dropout.to_string(),
    ]);

    let th = cfg.sim.satisfaction_threshold;
    let mut summary = Table::new(["metric", "value"]);
    let rows: [(&str, String); 10] = [
        ("users", cfg.sim.users.to_string()),
        ("tw_ms", (cfg.sim.tw_s * 1e3).to_string()),
        ("ticks", m.ticks.to_string()),
        ("satisfied_users", m.satisfied_users(th).to_string()),
        ("excluded_users", m.excluded_users.to_string()),
        ("haptic_rb_utilization", m.haptic_rb_utilization.to_string()),
        ("video_rb_utilization", m.video_rb_utilization.to_string()),
        ("video_chunks_generated", m.video.chunks_generated.to_string()),
        ("video_chunks_transmitted", m.video.chunks_transmitted.to_string()),
        ("video_chunks_dropped", m.video.chunks_dropped.to_string()),
    ];
    for (k, v) in rows {
        summary.push([k.to_string(), v]);
    }

    let dir = cfg.out_dir();
    Ok(vec![
        write_table(&dir, "simulate.csv", &table)?,
        write_table(&dir, "simulate_summary.csv", &summary)?,
    ])
}

pub fn capacity(mut cfg: ExperimentConfig, a: CapacityArgs, exec: Execution) -> Result<Vec<PathBuf>> {
    let c = &mut cfg.capacity;
    c.tw_ms = a.tw_ms.unwrap_or(std::mem::take(&mut c.tw_ms));
    c.users_min = pick(a.users_min, c.users_min);
    c.users_max = pick(a.users_max, c.users_max);
    c.satisfied_frac = pick(a.satisfied_frac, c.satisfied_frac);
    let c = &cfg.capacity;
    ensure!(!c.tw_ms.is_empty(), "range error: empty Tw list");
    ensure!(
        c.users_min >= 1 && c.users_min <= c.users_max && c.users_step >= 1,
        "range error: bad user range {}..={} step {}",
        c.users_min,
        c.users_max,
        c.users_step
    );
    let users: Vec<usize> = (c.users_min..=c.users_max).step_by(c.users_step).collect();
    let tw_s: Vec<f64> = c.tw_ms.iter().map(|ms| ms * 1e-3).collect();
    let sweep = capacity_sweep(&cfg.sim, &tw_s, &users, c.satisfied_frac, exec).context("capacity sweep")?;

    let mut table = Table::new(["Tw_ms", "U", "frac_satisfied"]);
    let mut summary = Table::new(["Tw_ms", "capacity_U", "non_monotone"]);
    for (ms, entry) in c.tw_ms.iter().zip(&sweep) {
        for p in &entry.result.points {
            table.push([ms.to_string(), p.users.to_string(), p.frac_satisfied.to_string()]);
        }
        if entry.result.capacity == *users.last().expect("non-empty") {
            log::warn!("Tw = {ms} ms: capacity reached the top of the user range");
        }
        summary.push([
            ms.to_string(),
            entry.result.capacity.to_string(),
            entry.result.non_monotone.to_string(),
        ]);
    }
    let dir = cfg.out_dir();
    Ok(vec![
        write_table(&dir, "capacity.csv", &table)?,
        write_table(&dir, "capacity_summary.csv", &summary)?,
    ])
}

pub fn analytic(mut cfg: ExperimentConfig, a: AnalyticArgs) -> Result<Vec<PathBuf>> {
    let s = &mut cfg.analytic;
    s.mu = pick(a.mu, s.mu);
    s.rho = a.rho.unwrap_or(std::mem::take(&mut s.rho));
    s.dmax_ms = a.dmax_ms.unwrap_or(std::mem::take(&mut s.dmax_ms));
    let s = &cfg.analytic;
    let mut table = Table::new(["rho", "mu_per_s", "dmax_s", "p_violation"]);
    for &rho in &s.rho {
        let model = QueueModel::from_rho(rho, s.mu).with_context(|| format!("rho = {rho}, mu = {}", s.mu))?;
        for &ms in &s.dmax_ms {
            let d = ms * 1e-3;
            let p = delay_violation_probability(&model, d).with_context(|| format!("D_max = {d} s"))?;
            table.push([rho.to_string(), s.mu.to_string(), d.to_string(), p.to_string()]);
        }
    }
    Ok(vec![write_table(&cfg.out_dir(), "analytic.csv", &table)?])
}

pub fn deadband(mut cfg: ExperimentConfig, a: DeadbandArgs) -> Result<Vec<PathBuf>> {
    let s = &mut cfg.deadband;
    s.trace = a.trace.or(s.trace.take());
    s.c = a.c.unwrap_or(std::mem::take(&mut s.c));
    s.floor_eps = pick(a.floor_eps, s.floor_eps);
    let trace = trace_or_synthetic(&cfg, cfg.deadband.trace.as_deref())?;
    let forces = trace.force_values();
    let s = &cfg.deadband;
    let mut table = Table::new(["c", "floor_eps_N", "samples", "transmitted", "reduction"]);
    for &c in &s.c {
        let db = DeadbandConfig::new(c, s.floor_eps).with_context(|| format!("deadband c = {c}"))?;
        let enc = encode_trace(&forces, &db)?;
        table.push([
            c.to_string(),
            s.floor_eps.to_string(),
            forces.len().to_string(),
            enc.transmitted_count().to_string(),
            enc.reduction_ratio.to_string(),
        ]);
    }
    Ok(vec![write_table(&cfg.out_dir(), "deadband.csv", &table)?])
}

pub fn mm1(mut cfg: ExperimentConfig, a: Mm1Args, exec: Execution) -> Result<Vec<PathBuf>> {
    let s = &mut cfg.mm1;
    s.lambda = pick(a.lambda, s.lambda);
    s.mu = pick(a.mu, s.mu);
    s.dmax_ms = a.dmax_ms.unwrap_or(std::mem::take(&mut s.dmax_ms));
    s.packets = pick(a.packets, s.packets);
    let s = &cfg.mm1;
    let d: Vec<f64> = s.dmax_ms.iter().map(|ms| ms * 1e-3).collect();
    let r = run_mm1(s.lambda, s.mu, &d, s.packets, cfg.seed(), exec).context("M/M/1 simulation")?;
    let model = QueueModel::new(s.lambda, s.mu).ok();

    let mut table = Table::new(["dmax_s", "closed_form", "empirical_sojourn", "empirical_wait", "rel_err"]);
    for p in &r.points {
        let closed = model.as_ref().and_then(|m| delay_violation_probability(m, p.d_max).ok());
        let rel = closed.filter(|&c| c > 0.0).map(|c| (p.sojourn_violation - c).abs() / c);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        table.push([
            p.d_max.to_string(),
            opt(closed),
            p.sojourn_violation.to_string(),
            p.wait_violation.to_string(),
            opt(rel),
        ]);
    }
    Ok(vec![write_table(&cfg.out_dir(), "mm1.csv", &table)?])
}

pub fn synth_trace(mut cfg: ExperimentConfig, a: SynthTraceArgs) -> Result<Vec<PathBuf>> {
    if let Some(kind) = a.activity {
        cfg.synth_trace.activity = match kind {
            ActivityArg::SinusoidalPush => MotionKind::SinusoidalPush,
            ActivityArg::PulseTrainTap => MotionKind::PulseTrainTap,
            ActivityArg::RampHoldPress => MotionKind::RampHoldPress,
        };
    }
    cfg.synth_trace.length = pick(a.length, cfg.synth_trace.length);
    let trace = synthetic_trace(&cfg)?;
    let path = write_atomic(&cfg.out_dir(), "trace.csv", |f| Ok(trace.write_csv(f)?))?;
    Ok(vec![path])
}

pub fn synth_channel(mut cfg: ExperimentConfig, a: SynthChannelArgs, exec: Execution) -> Result<Vec<PathBuf>> {
    let s = &mut cfg.synth_channel;
    s.users = pick(a.users, s.users);
    s.duration_s = pick(a.duration_s, s.duration_s);
    let s = &cfg.synth_channel;
    ensure!(s.users >= 1, "range error: users must be at least 1");
    ensure!(s.duration_s > 0.0, "range error: duration must be positive");
    let profile = synth_profile(s.users, s.duration_s, cfg.sim.tti_s, cfg.seed(), &s.fading, exec);
    let path = write_atomic(&cfg.out_dir(), "channel.csv", |f| Ok(profile.write_csv(f)?))?;
    Ok(vec![path])
}

pub fn init_weights(mut cfg: ExperimentConfig, a: InitWeightsArgs) -> Result<Vec<PathBuf>> {
    cfg.model.norm_trace = a.norm_trace.or(cfg.model.norm_trace.take());
    let stats = match cfg.model.norm_trace.as_deref() {
        Some(p) => {
            let t = load_trace(p, cfg.sim.ts_s).with_context(|| format!("loading trace {}", p.display()))?;
            compute_norm_stats(&t)?.stats
        }
        None => NormStats::identity(),
    };
    let mode: Mode = a.mode.into();
    let w = ModelWeights::random(cfg.model.config, mode, stats, cfg.seed()).context("initialising weights")?;
    let json = w.to_json_string()?;
    let name = match a.mode {
        ModeArg::MultiModal => "weights_multimodal.json",
        ModeArg::ForceOnly => "weights_force_only.json",
    };
    let path = write_atomic(&cfg.out_dir(), name, |f| {
        use std::io::Write;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(vec![path])
}
