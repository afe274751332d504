//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when a gating criterion fails.
//!
//! Run with `cargo test -p tactile-core --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{arr1, arr2, s, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tactile_core::deadband::{decode_zoh, encode_trace, DeadbandConfig};
use tactile_core::estimator::golden::{check_golden, GoldenFile};
use tactile_core::estimator::layers::{
    attention_weights, conv1d_forward, conv1d_preactivation, lstm_forward,
    transformer_encoder_forward, Conv1d, EncoderLayer, LayerNorm, Linear, Lstm, Padding,
};
use tactile_core::estimator::{
    baseline_zoh, branch_forward, horizon_profile, load_weights, rollout, rollout_window,
    start_points, ForceEstimator, LastForceEcho, Mode, ModelConfig, ModelWeights,
};
use tactile_core::netsim::{
    average_dropout, capacity_sweep_with, run_sim_with, SimConfig, SimInputs,
};
use tactile_core::queueing::{delay_violation_probability, plan_batch, BatchOutcome, QueueModel};
use tactile_core::trace::{
    synth_trace, HapticTrace, MotionKind, NormStats, SynthParams, Vec3, WindowTensor,
};
use tactile_core::{netsim::run_mm1, Execution};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure(
        (got - want).abs() <= tol,
        format!("{what}: got {got:.17}, want {want:.17} (tol {tol:e})"),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn load_config(name: &str) -> Result<SimConfig, String> {
    let path = repo_root().join("configs").join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Delay-violation closed form against the Monte-Carlo queue
// ---------------------------------------------------------------------------

fn mm1_cross_check() -> Check {
    let start = Instant::now();
    let (lambda, mu) = (500.0, 1000.0);
    let d_max = [0.001, 0.002, 0.005, 0.010];
    let sim = run_mm1(lambda, mu, &d_max, 10_000_000, 42, Execution::Parallel).map_err(|e| e.to_string())?;
    let model = QueueModel::new(lambda, mu).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for p in &sim.points {
        let closed = delay_violation_probability(&model, p.d_max).map_err(|e| e.to_string())?;
        let rel = (p.sojourn_violation - closed).abs() / closed;
        detail.push(format!("{}ms {:.4}/{:.4}", p.d_max * 1e3, p.sojourn_violation, closed));
        if closed > 1e-3 {
            ensure(rel <= 0.10, format!("D_max={} rel err {rel:.3}", p.d_max))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{} packets, {} in {elapsed:.1?}", sim.packets, detail.join(", ")))
}

// ---------------------------------------------------------------------------
// Deadband codec
// ---------------------------------------------------------------------------

fn deadband_reduction() -> Check {
    let cfg = DeadbandConfig::default();
    let n = 1000;
    let constant = vec![[1.0, -2.0, 0.5]; n];
    let enc = encode_trace(&constant, &cfg).map_err(|e| e.to_string())?;
    ensure(
        enc.reduction_ratio == 1.0 - 1.0 / n as f64,
        format!("constant trace reduction {}", enc.reduction_ratio),
    )?;

    let press = synth_trace(&SynthParams::new(MotionKind::RampHoldPress, 10_000, 1)).map_err(|e| e.to_string())?;
    let press_red = encode_trace(&press.force_values(), &DeadbandConfig::new(0.1, 1e-3).unwrap())
        .map_err(|e| e.to_string())?
        .reduction_ratio;
    ensure(press_red >= 0.80, format!("press-hold reduction {press_red:.3} < 0.80"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..1000 {
        let c = rng.random_range(0.01..0.5);
        let floor = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.05) };
        let cfg = DeadbandConfig::new(c, floor).unwrap();
        let len = rng.random_range(1..300);
        let mut x = [0.0; 3];
        let forces: Vec<Vec3> = (0..len)
            .map(|_| {
                for v in x.iter_mut() {
                    *v += rng.random_range(-0.2..0.2);
                }
                x
            })
            .collect();
        let enc = encode_trace(&forces, &cfg).map_err(|e| e.to_string())?;
        let rec = decode_zoh(&enc.mask, &enc.select(&forces)).map_err(|e| e.to_string())?;
        for (f, r) in forces.iter().zip(&rec) {
            let err = ((f[0] - r[0]).powi(2) + (f[1] - r[1]).powi(2) + (f[2] - r[2]).powi(2)).sqrt();
            ensure(
                err <= cfg.threshold(r) + 1e-12,
                format!("trial {trial}: ZOH error {err} above bound {}", cfg.threshold(r)),
            )?;
        }
    }
    Ok(format!(
        "constant 1-1/N exact, press-hold reduction {press_red:.3}, ZOH bound on 1000 traces"
    ))
}

// ---------------------------------------------------------------------------
// Default-size model shapes
// ---------------------------------------------------------------------------

fn probe_window(rows: usize, seed: f64) -> WindowTensor {
    WindowTensor {
        values: Array2::from_shape_fn((rows, 9), |(r, c)| ((r * 9 + c) as f64 * 0.013 + seed).sin()),
    }
}

fn model_shapes() -> Check {
    let cfg = ModelConfig::default();
    ensure(cfg.n_tokens() == 96, format!("N_tokens = {}", cfg.n_tokens()))?;
    let mm = ModelWeights::random(cfg, Mode::MultiModal, NormStats::identity(), 5).map_err(|e| e.to_string())?;
    let win = probe_window(cfg.window, 0.3);

    let force = win.values.slice(s![.., ..3]).to_owned();
    let top = branch_forward(&force.view(), &mm.top).map_err(|e| e.to_string())?;
    ensure(top.len() == 128, format!("force branch output {}", top.len()))?;
    let cmd = win.values.slice(s![.., 3..]).to_owned();
    let op = branch_forward(&cmd.view(), mm.op.as_ref().unwrap()).map_err(|e| e.to_string())?;
    ensure(op.len() == 128, format!("command branch output {}", op.len()))?;
    let fused = mm.fused_features(&win).map_err(|e| e.to_string())?;
    ensure(fused.len() == 256, format!("fused width {}", fused.len()))?;
    let out = mm.predict_next(&win).map_err(|e| e.to_string())?;
    ensure(out.len() == 3 && out.iter().all(|v| v.is_finite()), "head output")?;

    let fo = ModelWeights::random(cfg, Mode::ForceOnly, NormStats::identity(), 6).map_err(|e| e.to_string())?;
    let mut perturbed = win.clone();
    perturbed.values.slice_mut(s![.., 3..]).mapv_inplace(|v| 5.0 * v - 1.0);
    ensure(
        fo.predict_next(&win).unwrap() == fo.predict_next(&perturbed).unwrap(),
        "force-only output changed under command perturbation",
    )?;

    // Attention rows on the real token sequence of the force branch.
    let h1 = conv1d_forward(&force.view(), &mm.top.conv1, Padding::Valid).unwrap();
    let h2 = conv1d_forward(&h1.view(), &mm.top.conv2, Padding::Same).unwrap();
    ensure(h2.dim() == (96, 64), format!("conv stack output {:?}", h2.dim()))?;
    let tokens = lstm_forward(&h2.view(), &mm.top.lstm).unwrap();
    let enc = &mm.top.encoder;
    let q = enc.q.forward(&tokens.view());
    let k = enc.k.forward(&tokens.view());
    let heads = attention_weights(&q.view(), &k.view(), enc.n_heads);
    ensure(heads.len() == 8, format!("{} heads", heads.len()))?;
    let worst = heads
        .iter()
        .flat_map(|a| a.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    ensure(worst <= 1e-6, format!("attention row sum off by {worst}"))?;
    Ok(format!(
        "96 tokens, branches 128+128, fused 256, head 3, force-only invariant, row sums within {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Tiny-config numeric oracle
// ---------------------------------------------------------------------------

fn hand_computed() -> Result<(), String> {
    // One filter, width 2, valid: y[t] = -0.5 x[t] + x[t+1] + 0.25.
    let x = arr2(&[[1.0], [2.0], [3.0], [4.0]]);
    let conv = Conv1d {
        kernel: Array3::from_shape_vec((2, 1, 1), vec![-0.5, 1.0]).unwrap(),
        bias: arr1(&[0.25]),
    };
    let y = conv1d_forward(&x.view(), &conv, Padding::Valid).unwrap();
    for (got, want) in y.column(0).iter().zip([1.75, 2.25, 2.75]) {
        close(*got, want, 1e-10, "valid conv")?;
    }
    // Width 3, same: one zero on each side.
    let x = arr2(&[[1.0], [2.0], [3.0]]);
    let conv = Conv1d {
        kernel: Array3::from_shape_vec((3, 1, 1), vec![1.0, 10.0, 100.0]).unwrap(),
        bias: arr1(&[0.0]),
    };
    let y = conv1d_preactivation(&x.view(), &conv, Padding::Same).unwrap();
    for (got, want) in y.column(0).iter().zip([210.0, 321.0, 32.0]) {
        close(*got, want, 1e-10, "same conv")?;
    }

    // One LSTM step from zero state, H = 1, input 1:
    // c = sigmoid(0.5) tanh(1), h = sigmoid(2) tanh(c).
    let lstm = Lstm {
        w_ih: arr2(&[[0.5, -0.5, 1.0, 2.0]]),
        w_hh: arr2(&[[3.0, 3.0, 3.0, 3.0]]),
        bias: Array1::zeros(4),
    };
    let h = lstm_forward(&arr2(&[[1.0]]).view(), &lstm).unwrap();
    close(h[[0, 0]], 0.388849884436854191984813969569, 1e-10, "LSTM h")?;

    // Two tokens, one head, identity projections, zero feed-forward.
    let eye = Linear {
        weight: Array2::eye(2),
        bias: Array1::zeros(2),
    };
    let zero = |i, o| Linear {
        weight: Array2::zeros((i, o)),
        bias: Array1::zeros(o),
    };
    let ln = LayerNorm {
        gamma: Array1::ones(2),
        beta: Array1::zeros(2),
    };
    let layer = EncoderLayer {
        n_heads: 1,
        q: eye.clone(),
        k: eye.clone(),
        v: eye.clone(),
        o: eye,
        ln1: ln.clone(),
        ffn1: zero(2, 3),
        ffn2: zero(3, 2),
        ln2: ln,
    };
    let x = Array2::<f64>::eye(2);
    let a = attention_weights(&x.view(), &x.view(), 1);
    let (w0, w1) = (0.669761549326656925616794945834, 0.330238450673343074383205054166);
    close(a[0][[0, 0]], w0, 1e-10, "attention w00")?;
    close(a[0][[0, 1]], w1, 1e-10, "attention w01")?;
    close(a[0][[1, 1]], w0, 1e-10, "attention w11")?;
    let y = transformer_encoder_forward(&x.view(), &layer).unwrap();
    let u = 0.999994999926038653579824002363;
    close(y[[0, 0]], u, 1e-10, "encoder y00")?;
    close(y[[0, 1]], -u, 1e-10, "encoder y01")?;
    close(y[[1, 0]], -u, 1e-10, "encoder y10")?;
    Ok(())
}

fn tiny_oracle() -> Check {
    hand_computed()?;
    let mut worst = 0.0f64;
    for name in ["tiny_mm", "tiny_fo"] {
        let w = load_weights(fixtures().join(format!("{name}.weights.json"))).map_err(|e| e.to_string())?;
        let g = GoldenFile::load(fixtures().join(format!("{name}.golden.json"))).map_err(|e| e.to_string())?;
        for st in check_golden(&w, &g).map_err(|e| e.to_string())? {
            ensure(
                st.max_abs <= 1e-10,
                format!("{name} {}: max abs error {:e}", st.stage, st.max_abs),
            )?;
            worst = worst.max(st.max_abs);
        }
    }
    Ok(format!("hand-computed conv/LSTM/attention and 2 fixtures, worst error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

fn rollout_structure() -> Check {
    let trace = synth_trace(&SynthParams::new(MotionKind::SinusoidalPush, 800, 4)).map_err(|e| e.to_string())?;
    let window = 10;
    let t = 300;
    // Marker predictions that cannot occur in the trace.
    let preds: Vec<Vec3> = (0..30).map(|i| [1e6 + i as f64, 0.0, 0.0]).collect();
    for k in 1..=25 {
        let w = rollout_window(&trace, t, k, window, &preds[..k - 1]);
        let predicted = w.values.column(0).iter().filter(|v| **v >= 1e6).count();
        ensure(
            predicted == (k - 1).min(window),
            format!("step {k}: {predicted} predicted rows"),
        )?;
        let cmd_ok = (0..window).all(|r| {
            let tick = t + k - window + r;
            w.values.slice(s![r, 3..]).iter().zip(&trace.row(tick)[3..]).all(|(a, b)| a == b)
        });
        ensure(cmd_ok, format!("step {k}: command rows differ from the trace"))?;
    }

    let echo = LastForceEcho { window_len: window };
    for &start in &start_points(trace.len(), window, 20, 37) {
        let a = rollout(&trace, start, 20, &echo).map_err(|e| e.to_string())?;
        let b = baseline_zoh(&trace, start, 20).map_err(|e| e.to_string())?;
        ensure(a.predictions == b.predictions, format!("echo differs from ZOH at t={start}"))?;
    }
    Ok("predicted rows = min(k-1, T) for k <= 25; echo stub equals ZOH bitwise".into())
}

// ---------------------------------------------------------------------------
// Capacity
// ---------------------------------------------------------------------------

fn contrived_capacity() -> Check {
    let start = Instant::now();
    let cfg = load_config("contrived.toml")?;
    let users: Vec<usize> = (1..=130).collect();
    let inputs = SimInputs::prepare(&cfg, 130, Execution::Parallel).map_err(|e| e.to_string())?;
    let sweep = capacity_sweep_with(&cfg, &[0.001, 0.010], &users, 0.95, &inputs, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let (base, relaxed) = (sweep[0].result.capacity, sweep[1].result.capacity);
    ensure(base == 10, format!("capacity at Tw=1 ms is {base}"))?;
    ensure(relaxed == 100, format!("capacity at Tw=10 ms is {relaxed}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!("capacity 10 at 1 ms, 100 at 10 ms, {elapsed:.1?}"))
}

fn trend_targets() -> Check {
    let cfg = load_config("trend.toml")?;
    let tws = [0.001, 0.005, 0.010, 0.015, 0.020];
    let users: Vec<usize> = (1..=320).collect();
    let inputs = SimInputs::prepare(&cfg, 320, Execution::Parallel).map_err(|e| e.to_string())?;

    for u in [12, 40, 150, 250] {
        let mut prev = f64::INFINITY;
        for &tw in &tws {
            let c = SimConfig {
                users: u,
                tw_s: tw,
                ..cfg.clone()
            };
            let m = run_sim_with(&c, &inputs).map_err(|e| e.to_string())?;
            ensure(m.conserved() && m.rb_accounting_ok(), format!("U={u} Tw={tw}: accounting"))?;
            ensure(
                m.aggregate_dropout <= prev,
                format!("U={u}: dropout rises to {} at Tw={tw}", m.aggregate_dropout),
            )?;
            prev = m.aggregate_dropout;
        }
    }

    let sweep = capacity_sweep_with(&cfg, &tws, &users, 0.95, &inputs, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let caps: Vec<usize> = sweep.iter().map(|e| e.result.capacity).collect();
    ensure(caps.windows(2).all(|w| w[0] <= w[1]), format!("capacity not monotone: {caps:?}"))?;
    ensure(
        caps[4] < *users.last().unwrap(),
        format!("capacity {caps:?} saturates the scanned range"),
    )?;
    let base = caps[0] as f64;
    let (r10, r20) = (caps[2] as f64 / base, caps[4] as f64 / base);
    ensure(r10 >= 1.3, format!("capacity(10 ms)/capacity(1 ms) = {r10:.2}"))?;
    ensure(r20 >= 1.6, format!("capacity(20 ms)/capacity(1 ms) = {r20:.2}"))?;
    Ok(format!(
        "capacity over Tw {{1,5,10,15,20}} ms = {caps:?}; ratios {r10:.2}x, {r20:.2}x"
    ))
}

// ---------------------------------------------------------------------------
// Dropout-rate and batch-size arithmetic, plus simulator accounting
// ---------------------------------------------------------------------------

fn unit_arithmetic() -> Check {
    let (r, ex) = average_dropout(&[0, 10], &[100, 100]);
    ensure(r == 0.05 && ex == 0, format!("R = {r}"))?;
    let (r, ex) = average_dropout(&[0, 10, 0], &[100, 100, 0]);
    ensure(r == 0.05 && ex == 1, format!("R with idle user = {r}, excluded {ex}"))?;

    let p = plan_batch(0.010, 0.001, 32, 325).map_err(|e| e.to_string())?;
    ensure(p.is_feasible() && p.usable() == 10, format!("{p:?}"))?;
    let p = plan_batch(0.010, 0.001, 32, 92).map_err(|e| e.to_string())?;
    ensure(
        matches!(p, BatchOutcome::Infeasible { fallback: 2, .. }) && p.plan().p == 10,
        format!("{p:?}"),
    )?;
    let p = plan_batch(0.001, 0.001, 32, 50).map_err(|e| e.to_string())?;
    ensure(p.usable() == 1, format!("{p:?}"))?;
    ensure(plan_batch(0.0005, 0.001, 32, 50).is_err(), "Tw < Ts accepted")?;
    ensure(plan_batch(0.003, 0.001, 32, 100).unwrap().plan().p == 3, "floor(3 ms / 1 ms)")?;

    // Accounting across a spread of configurations.
    let base = load_config("trend.toml")?;
    let contrived = load_config("contrived.toml")?;
    let mut runs = 0;
    for cfg in [base, contrived] {
        let inputs = SimInputs::prepare(&cfg, 60, Execution::Parallel).map_err(|e| e.to_string())?;
        for u in [1, 7, 25, 60] {
            for tw in [0.001, 0.004, 0.010, 0.020] {
                let c = SimConfig {
                    users: u,
                    tw_s: tw,
                    ..cfg.clone()
                };
                let m = run_sim_with(&c, &inputs).map_err(|e| e.to_string())?;
                ensure(m.conserved(), format!("conservation U={u} Tw={tw}"))?;
                ensure(m.rb_accounting_ok(), format!("RB accounting U={u} Tw={tw}"))?;
                runs += 1;
            }
        }
    }
    Ok(format!("dropout and batch arithmetic exact; accounting held on {runs} runs"))
}

// ---------------------------------------------------------------------------
// Multi-modal against force-only (needs trained weights)
// ---------------------------------------------------------------------------

fn horizon_mse<E: ForceEstimator>(trace: &HapticTrace, est: &E, horizon: usize) -> Result<f64, String> {
    let starts = start_points(trace.len(), est.window_len(), horizon, 50);
    let profile = horizon_profile(Execution::Parallel, &starts, horizon, |t| rollout(trace, t, horizon, est))
        .map_err(|e| e.to_string())?;
    Ok(*profile.mean_profile().last().unwrap())
}

fn multimodal_trend() -> Option<Check> {
    let mm = std::env::var("TACTILE_MM_WEIGHTS").ok()?;
    let fo = std::env::var("TACTILE_FO_WEIGHTS").ok()?;
    Some((|| {
        let mm = load_weights(&mm).map_err(|e| e.to_string())?;
        let fo = load_weights(&fo).map_err(|e| e.to_string())?;
        let trace = synth_trace(&SynthParams::new(MotionKind::SinusoidalPush, 20_000, 77)).map_err(|e| e.to_string())?;
        let a = horizon_mse(&trace, &mm, 20)?;
        let b = horizon_mse(&trace, &fo, 20)?;
        ensure(a <= b, format!("multi-modal MSE {a:.3e} > force-only {b:.3e}"))?;
        Ok(format!("20-step MSE multi-modal {a:.3e} <= force-only {b:.3e}"))
    })())
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("delay-violation closed form vs M/M/1 Monte Carlo", mm1_cross_check),
        ("deadband reduction and ZOH bound", deadband_reduction),
        ("model shape suite", model_shapes),
        ("tiny-config numeric oracle", tiny_oracle),
        ("rollout structure", rollout_structure),
        ("batching determinism (contrived capacity)", contrived_capacity),
        ("capacity trend targets", trend_targets),
        ("dropout-rate and batch-size units, accounting", unit_arithmetic),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1?}]", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.1?}]", start.elapsed());
            }
        }
    }
    let name = "multi-modal vs force-only 20-step MSE (not gating)";
    match multimodal_trend() {
        None => println!("SKIP  {name}: set TACTILE_MM_WEIGHTS and TACTILE_FO_WEIGHTS to trained weights"),
        Some(Ok(detail)) => println!("PASS  {name}: {detail}"),
        Some(Err(why)) => println!("FAIL  {name}: {why}"),
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        std::process::exit(1);
    }
    println!("all gating criteria passed");
}
