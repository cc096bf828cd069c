use kpin::config::{ChannelKind, Method, ScenarioConfig};
use kpin::core::metrics::from_db;
use kpin::core::training::Strategy;
use kpin::harness::{run_scenario, Scenario};

fn quick() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.training.n_e = 5;
    cfg.run.seeds = vec![1];
    cfg
}

fn ar_oracle(n_rx: usize) -> ScenarioConfig {
    let mut cfg = quick();
    cfg.channel.kind = ChannelKind::ArOracle;
    cfg.channel.ar_phi = vec![0.5, 0.3];
    cfg.channel.ar_sigma_u = 0.2;
    cfg.array.n_rx = n_rx;
    cfg.data.train_len = 20_000;
    cfg.signal.snr_db = 40.0;
    cfg.model.epsilon = None;
    cfg
}

/// Stationary per-entry variance of the AR(2) oracle above.
fn oracle_power() -> f64 {
    let (a, b, s) = (0.5, 0.3, 0.2);
    s * (1.0 - b) / ((1.0 + b) * ((1.0 - b) * (1.0 - b) - a * a))
}

#[test]
fn duplicate_seeds_give_duplicate_rows() {
    let mut cfg = quick();
    cfg.run.seeds = vec![7, 7];
    let res = run_scenario(&cfg, &[Method::Ar, Method::Arkf, Method::Kpin]).unwrap();
    assert!(res.failures.is_empty());
    assert_eq!(res.runs.len(), 6);
    for m in ["AR", "ARKF", "KPIN"] {
        let reports: Vec<_> = res.reports_for(m).collect();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0], reports[1]);
    }
}

#[test]
fn results_are_reproducible() {
    let cfg = quick();
    let a = run_scenario(&cfg, &[Method::Arkf, Method::Kpin]).unwrap();
    let b = run_scenario(&cfg, &[Method::Arkf, Method::Kpin]).unwrap();
    let reports = |r: &kpin::harness::ScenarioResult| r.runs.iter().map(|m| m.report.clone()).collect::<Vec<_>>();
    assert_eq!(reports(&a), reports(&b));
    assert_eq!(a.config_hash, b.config_hash);
    assert!(a.runs.iter().all(|r| r.report.config_hash == a.config_hash));
}

#[test]
fn ar_oracle_error_power_matches_innovation_variance() {
    let mut cfg = ar_oracle(4);
    cfg.data.horizon = 2_000;
    let s = Scenario::generate(&cfg, 1).unwrap();
    let (ar, _) = s.fit().unwrap();
    let trace = s.ar_trace(&ar).unwrap();
    let truth = s.horizon_truth();
    let err: f64 = trace.records().iter().zip(&truth).map(|(r, h)| (h - &r.h_pred).norm_sqr()).sum();
    let power: f64 = truth.iter().map(|h| h.norm_sqr()).sum();
    let expected = 0.2 / oracle_power();
    assert!((err / power - expected).abs() / expected < 0.05, "{} vs {expected}", err / power);
}

#[test]
fn ar_oracle_nmse_matches_closed_form() {
    // the mean of per-step ratios only approaches the ratio of means once
    // ‖h‖² concentrates, hence the wide array
    let mut cfg = ar_oracle(16);
    cfg.data.horizon = 500;
    cfg.run.seeds = (1..=5).collect();
    let res = run_scenario(&cfg, &[Method::Ar]).unwrap();
    let lin: Vec<f64> = res.reports_for("AR").map(|r| from_db(r.nmse_db)).collect();
    let mean = lin.iter().sum::<f64>() / lin.len() as f64;
    let expected = 0.2 / oracle_power();
    assert!((mean - expected).abs() / expected < 0.05, "{mean} vs {expected}");
}

#[test]
fn untrained_gain_does_not_beat_the_matched_filter() {
    let mut cfg = ar_oracle(2);
    cfg.data.train_len = 2_000;
    cfg.signal.snr_db = 10.0;
    cfg.training.n_e = 0;
    cfg.run.seeds = vec![1, 2, 3];
    let res = run_scenario(&cfg, &[Method::Arkf, Method::Kpin]).unwrap();
    for (k, a) in res.reports_for("KPIN").zip(res.reports_for("ARKF")) {
        assert!(k.nmse_db >= a.nmse_db, "seed {}: {} < {}", k.seed, k.nmse_db, a.nmse_db);
    }
}

#[test]
fn training_never_reads_the_horizon() {
    let mut cfg = quick();
    cfg.training.n_e = 3;
    let s = Scenario::generate(&cfg, 3).unwrap();
    let (_, ssm) = s.fit().unwrap();
    let mut tampered = s.clone();
    let t = s.train_len();
    for y in &mut tampered.signals.observations[t..] {
        *y = y.scale(kpin::core::C64::new(-3.0, 1.0));
    }
    let frames: Vec<_> = s.channels.frames().iter().enumerate().map(|(i, f)| if i >= t { f.scale_real(5.0) } else { f.clone() }).collect();
    tampered.channels = kpin::core::channel::ChannelSequence::new(s.channels.n_rx, s.channels.n_tx, s.channels.slot_ms, s.channels.seed, frames).unwrap();
    assert_eq!(tampered.fit().unwrap().1, ssm);
    for strategy in [Strategy::Unsupervised, Strategy::PredictionSupervised, Strategy::FilterSupervised] {
        assert_eq!(s.train(&ssm, strategy).unwrap().net, tampered.train(&ssm, strategy).unwrap().net);
    }
}
