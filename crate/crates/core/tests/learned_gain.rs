mod common;

use common::{random_ssm, random_vectors};
use kpin_core::ar_ssm::Ssm;
use kpin_core::channel::generate_ar_oracle;
use kpin_core::ftp::{arkf_predict, KalmanState};
use kpin_core::net::KpinNetwork;
use kpin_core::signal::observe;
use kpin_core::training::{
    objective_and_gradient, segment, subsequence_gradient, test, HybridRollout, HybridState, KalmanGainInjector, NetGain, Strategy,
    TrainConfig,
};
use kpin_core::ComplexVector;
use proptest::prelude::*;

fn epoch_objective(ssm: &Ssm, net: &KpinNetwork, signals: &[ComplexVector], labels: Option<&[ComplexVector]>, cfg: &TrainConfig) -> (f64, Vec<f64>) {
    objective_and_gradient(ssm, net, signals, labels, &segment(signals.len(), cfg.t_s), cfg).unwrap()
}

/// Worst relative disagreement between the analytic gradient and central differences.
fn worst_gradient_error(strategy: Strategy, gru_update: bool, seed: u64) -> f64 {
    // MN = 2, τN = 2
    let ssm = random_ssm(2, 1, 1, 1.5, 0.2, seed);
    let net = KpinNetwork::new(2, 2, Some(6), seed + 1).unwrap();
    let signals = random_vectors(9, 2, seed + 2);
    let labels = random_vectors(9, 2, seed + 3);
    let labels = strategy.needs_labels().then_some(labels.as_slice());
    let cfg = TrainConfig {
        t_s: 3,
        n_b: 3,
        beta: 0.01,
        strategy,
        gru_update,
        ..TrainConfig::default()
    };
    let (_, grad) = epoch_objective(&ssm, &net, &signals, labels, &cfg);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let fd = (epoch_objective(&ssm, &plus, &signals, labels, &cfg).0 - epoch_objective(&ssm, &minus, &signals, labels, &cfg).0) / (2.0 * h);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-5));
    }
    worst
}

#[test]
fn epoch_gradient_matches_central_differences() {
    for strategy in [Strategy::Unsupervised, Strategy::PredictionSupervised, Strategy::FilterSupervised] {
        for gru_update in [true, false] {
            let worst = worst_gradient_error(strategy, gru_update, 31);
            assert!(worst < 1e-4, "{strategy:?} gru_update={gru_update}: {worst}");
        }
    }
}

#[test]
fn injected_kalman_gains_reproduce_arkf() {
    let ssm = random_ssm(2, 2, 2, 1.5, 0.3, 7);
    let signals = random_vectors(200, ssm.signal_dim(), 8);
    let init = KalmanState::stationary(&ssm).unwrap();
    let arkf = arkf_predict(&signals, &ssm, init.clone(), 200).unwrap();
    let mut injector = KalmanGainInjector::new(&ssm, &init);
    let start = HybridState::from_prior(&ssm, init.x_prior.clone()).unwrap();
    let hybrid = HybridRollout::run(&ssm, &mut injector, start, &signals).unwrap().to_trace();
    assert_eq!(hybrid.len(), arkf.len());
    for (a, b) in arkf.records().iter().zip(hybrid.records()) {
        assert!(a.h_pred.max_abs_diff(&b.h_pred) < 1e-9);
        assert!(a.y_pred.max_abs_diff(&b.y_pred) < 1e-9);
    }
}

#[test]
fn test_rollout_is_deterministic() {
    let ssm = random_ssm(2, 1, 2, 1.0, 0.1, 12);
    let net = KpinNetwork::new(ssm.signal_dim(), ssm.state_dim(), Some(5), 13).unwrap();
    let signals = random_vectors(10, ssm.signal_dim(), 14);
    let a = test(&signals, &ssm, &net, 5, true).unwrap();
    assert_eq!(a.len(), 5);
    assert_eq!(a, test(&signals, &ssm, &net, 5, true).unwrap());
    assert!(a.records().iter().all(|r| r.h_pred.len() == 2 && r.y_pred.len() == 2));
}

#[test]
fn network_output_scales_predictions_only_through_the_gain() {
    let ssm = random_ssm(1, 2, 1, 1.0, 0.1, 15);
    let zero = KpinNetwork::zeros(ssm.signal_dim(), ssm.state_dim(), Some(4)).unwrap();
    let signals = random_vectors(8, ssm.signal_dim(), 16);
    let mut gains = NetGain::new(&zero, true);
    let trace = HybridRollout::run(&ssm, &mut gains, HybridState::cold(&ssm), &signals).unwrap().to_trace();
    // zero gain leaves the cold-started state at zero
    assert!(trace.h_preds().iter().all(|h| h.norm() == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn noiseless_unsupervised_loss_is_scaled_prediction_loss(seed in 0u64..10_000, rho in 0.1f64..10.0, p in 1usize..3) {
        let ssm = random_ssm(2, 2, p, rho, 0.0, seed);
        let tau = 2.0;
        let ch = generate_ar_oracle(&ssm.phi, &ssm.sigma_u, 2, 2, p, 25, seed + 1).unwrap();
        let sig = observe(&ch, &ssm.q, 0.0, 0).unwrap();
        let h = ch.vectors(0..25);
        let net = KpinNetwork::new(ssm.signal_dim(), ssm.state_dim(), Some(6), seed + 2).unwrap();
        let s3 = subsequence_gradient(&ssm, &net, &sig.observations, None, Strategy::Unsupervised, true).unwrap();
        let s2 = subsequence_gradient(&ssm, &net, &sig.observations, Some(&h), Strategy::PredictionSupervised, true).unwrap();
        prop_assert_eq!(s3.losses.len(), s2.losses.len());
        for (a, b) in s3.losses.iter().zip(&s2.losses) {
            prop_assert!((a - rho * tau * b).abs() <= 1e-9 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn gradient_matches_differences_on_random_instances(seed in 0u64..10_000) {
        prop_assert!(worst_gradient_error(Strategy::Unsupervised, true, seed) < 1e-4);
    }
}
