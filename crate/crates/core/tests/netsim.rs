use std::io::Write;

use proptest::prelude::*;

use tactile_core::netsim::channel::synth_user_channel;
use tactile_core::netsim::{
    capacity_sweep, load_channel, run_mm1, run_sim, ChannelSpec, FadingParams, HapticSource,
    SimConfig, VideoModel, VideoSource,
};
use tactile_core::queueing::{delay_violation_probability, plan_batch, required_dmax, QueueModel};
use tactile_core::Execution;

/// Modified Bessel function of the first kind, order 0, by power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// `E[log2(1 + snr * g)]` for unit-mean Rician power gain `g`, integrated
/// with Simpson's rule over the gain density.
fn rician_mean_se(snr: f64, k: f64) -> f64 {
    let pdf = |g: f64| {
        (k + 1.0) * (-k - (k + 1.0) * g).exp() * bessel_i0(2.0 * (k * (k + 1.0) * g).sqrt())
    };
    let (a, b, n) = (0.0, 6.0, 60_000);
    let h = (b - a) / n as f64;
    let f = |g: f64| pdf(g) * (1.0 + snr * g).log2();
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn rician_channel_mean_matches_numeric_integration() {
    let p = FadingParams {
        mean_snr_db_range: (10.0, 10.0),
        rician_k: 10.0,
        shadowing_sigma_db: 0.0,
        se_cap: 100.0,
        ..FadingParams::default()
    };
    let se = synth_user_channel(0, 200_000, 17, &p);
    let empirical = se.iter().sum::<f64>() / se.len() as f64;
    let analytic = rician_mean_se(10.0, 10.0);
    assert!(
        (empirical - analytic).abs() / analytic < 0.05,
        "empirical {empirical}, analytic {analytic}"
    );
}

#[test]
fn video_mean_frame_size_within_two_percent() {
    let model = VideoModel::default();
    let frames: Vec<_> = VideoSource::new(model, 1e-3, 3, 0).take(10_000).collect();
    let mean = frames.iter().map(|f| f.bytes as f64).sum::<f64>() / frames.len() as f64;
    let want = model.mean_frame_bytes();
    assert!((mean - want).abs() / want < 0.02, "{mean} vs {want}");
    assert!(frames.windows(2).all(|w| w[0].created <= w[1].created));
}

#[test]
fn symmetric_users_see_fair_dropout() {
    let cfg = SimConfig {
        users: 12,
        haptic: HapticSource::EveryTick,
        video: None,
        channel: ChannelSpec::Fixed { se: 4.0 },
        duration_s: 100.0,
        ..SimConfig::default()
    };
    let m = run_sim(&cfg).unwrap();
    assert!(m.ticks >= 100_000);
    let r: Vec<f64> = m.per_user.iter().map(|u| u.dropout().unwrap()).collect();
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(0.0, f64::max);
    assert!(hi > 0.0 && (hi - lo) / hi < 0.10, "{r:?}");
    assert!(m.conserved() && m.rb_accounting_ok());
}

#[test]
fn default_scenario_is_deterministic_and_conserving() {
    let cfg = SimConfig {
        users: 30,
        duration_s: 1.5,
        tw_s: 0.008,
        ..SimConfig::default()
    };
    let a = run_sim(&cfg).unwrap();
    let b = run_sim(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.conserved() && a.rb_accounting_ok());
    assert!(a.video.chunks_generated > 0);
    let delivered: u64 = a.delay_histogram.iter().sum();
    assert_eq!(delivered, a.per_user.iter().map(|u| u.transmitted).sum::<u64>());
}

#[test]
fn channel_file_drives_the_simulator() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "user,tti,se").unwrap();
    for u in 0..2 {
        for t in 0..500 {
            writeln!(f, "{u},{t},{}", if u == 0 { 4.0 } else { 0.0 }).unwrap();
        }
    }
    f.flush().unwrap();
    let profile = load_channel(f.path()).unwrap();
    assert_eq!((profile.users(), profile.ttis()), (2, 500));
    let cfg = SimConfig {
        users: 2,
        haptic: HapticSource::EveryTick,
        video: None,
        channel: ChannelSpec::File {
            path: f.path().to_path_buf(),
        },
        duration_s: 0.5,
        ..SimConfig::default()
    };
    let m = run_sim(&cfg).unwrap();
    // User 1 never gets a usable RB.
    assert_eq!(m.per_user[0].dropped, 0);
    assert_eq!(m.per_user[1].transmitted, 0);
    let short = SimConfig {
        duration_s: 0.6,
        ..cfg
    };
    assert!(run_sim(&short).is_err());
}

#[test]
fn capacity_is_monotone_in_tw_for_the_contrived_scenario() {
    let cfg = SimConfig {
        haptic: HapticSource::EveryTick,
        video: None,
        channel: ChannelSpec::Fixed { se: 26.0 },
        duration_s: 0.5,
        ..SimConfig::default()
    };
    let users: Vec<usize> = (1..=70).collect();
    let sweep = capacity_sweep(&cfg, &[0.001, 0.002, 0.004, 0.006], &users, 0.95, Execution::Parallel).unwrap();
    let caps: Vec<usize> = sweep.iter().map(|e| e.result.capacity).collect();
    assert_eq!(caps, vec![10, 20, 40, 60]);
}

#[test]
fn mm1_zero_threshold_and_execution_modes() {
    let r = run_mm1(500.0, 1000.0, &[0.0, 0.005], 1_000_000, 5, Execution::Parallel).unwrap();
    assert!((r.points[0].wait_violation - 0.5).abs() < 0.01);
    let closed = delay_violation_probability(&QueueModel::new(500.0, 1000.0).unwrap(), 0.005).unwrap();
    assert!((r.points[1].sojourn_violation - closed).abs() / closed < 0.1);
    let s = run_mm1(500.0, 1000.0, &[0.0, 0.005], 1_000_000, 5, Execution::Sequential).unwrap();
    assert_eq!(r, s);
}

proptest! {
    #[test]
    fn required_dmax_inverts_the_closed_form(rho in 0.01f64..0.99, mu in 10.0f64..1e4, target in 1e-9f64..1.0) {
        let m = QueueModel::from_rho(rho, mu).unwrap();
        let d = required_dmax(&m, target).unwrap();
        let p = delay_violation_probability(&m, d).unwrap();
        prop_assert!((p - target).abs() <= 1e-12 * target.max(1e-300) + 1e-15);
    }

    #[test]
    fn usable_batch_always_fits(tw_ticks in 1u32..50, s_p in 1u32..200, s_rb in 0u32..500) {
        let out = plan_batch(tw_ticks as f64 * 1e-3, 1e-3, s_p, s_rb).unwrap();
        prop_assert_eq!(out.plan().p, tw_ticks);
        prop_assert!(out.usable() <= tw_ticks);
        prop_assert!(out.usable() as u64 * s_p as u64 <= s_rb as u64);
    }
}
