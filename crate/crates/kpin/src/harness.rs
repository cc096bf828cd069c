//! Scenario execution: data generation, identification, every predictor,
//! and Monte Carlo reduction over seeds.

use std::time::Instant;

use kpin_core::ar_ssm::{identify, ArModel, Ssm};
use kpin_core::channel::{generate_ar_oracle, generate_surrogate, ChannelSequence, DynamicCondition, SurrogateChannelParams};
use kpin_core::ftp::{ar_predict, arkf_predict, KalmanState, PredictionTrace};
use kpin_core::metrics::{mean_rate, EvalReport};
use kpin_core::net::KpinNetwork;
use kpin_core::numerics::{ComplexMatrix, ComplexVector};
use kpin_core::signal::{make_pilot, observe, rho_for_snr, transform_pilot, PilotConfig, SignalSequence, TransformedPilot};
use kpin_core::training::{test, Strategy, TrainConfig, Trainer};
use kpin_core::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ChannelKind, Method, ScenarioConfig};
use crate::error::{Error, Result};

/// Independent sub-seed for one purpose of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_ANGLES: u64 = 1;
const STREAM_PHASES: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_AR: u64 = 4;
const STREAM_INIT: u64 = 5;
const STREAM_TRAIN: u64 = 6;

/// Generated data of one seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Resolved configuration.
    pub cfg: ScenarioConfig,
    /// Run seed.
    pub seed: u64,
    /// True channels, `T + L` slots.
    pub channels: ChannelSequence,
    /// Received signals, `T + L` slots.
    pub signals: SignalSequence,
    /// Transformed pilot.
    pub q: TransformedPilot,
}

impl Scenario {
    /// Generates channels and signals for `seed`.
    pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (n, m) = (cfg.array.n_rx, cfg.array.n_tx);
        let len = cfg.data.train_len + cfg.data.horizon;
        let c = &cfg.channel;
        let cond = DynamicCondition::new(c.speed_kmh, c.carrier_ghz, c.aging)?;
        let channels = match c.kind {
            ChannelKind::Surrogate => {
                let params = SurrogateChannelParams {
                    n_paths: c.n_paths,
                    power_decay: c.power_decay,
                    angle_seed: derive_seed(seed, STREAM_ANGLES),
                    phase_seed: derive_seed(seed, STREAM_PHASES),
                    rician_k_db: c.rician_k_db,
                };
                generate_surrogate(&cond, &params, n, m, len)?
            }
            ChannelKind::ArOracle => {
                let d = n * m;
                let p = c.ar_phi.len();
                let mut phi = ComplexMatrix::zeros(d, p * d);
                for (j, &coef) in c.ar_phi.iter().enumerate() {
                    for i in 0..d {
                        phi[(i, j * d + i)] = C64::new(coef, 0.0);
                    }
                }
                let sigma_u = ComplexMatrix::identity(d).scale_real(c.ar_sigma_u);
                generate_ar_oracle(&phi, &sigma_u, n, m, p, len, derive_seed(seed, STREAM_AR))?
            }
        };
        let pilot = make_pilot(&PilotConfig {
            n_tx: m,
            tau: cfg.array.tau,
            rho: 1.0,
            sigma_v: cfg.signal.sigma_v,
        })?;
        let power = channels.mean_entry_power(cfg.data.train_len);
        let rho = rho_for_snr(cfg.signal.snr_db, cfg.signal.sigma_v, &pilot, power)?;
        let q = transform_pilot(&pilot, rho, n)?;
        let signals = observe(&channels, &q, cfg.signal.sigma_v, derive_seed(seed, STREAM_NOISE))?;
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            channels,
            signals,
            q,
        })
    }

    /// Rebuilds a scenario from stored channels and signals.
    pub fn from_replay(cfg: &ScenarioConfig, seed: u64, channels: ChannelSequence, signals: SignalSequence) -> Result<Self> {
        cfg.validate()?;
        let len = cfg.data.train_len + cfg.data.horizon;
        if (channels.n_rx, channels.n_tx) != (cfg.array.n_rx, cfg.array.n_tx) {
            return Err(Error::Config(format!(
                "replay holds {}x{} channels, config expects {}x{}",
                channels.n_rx, channels.n_tx, cfg.array.n_rx, cfg.array.n_tx
            )));
        }
        if channels.len() < len || signals.len() < len {
            return Err(Error::Config(format!("replay is shorter than T + L = {len}")));
        }
        let pilot = make_pilot(&PilotConfig {
            n_tx: cfg.array.n_tx,
            tau: cfg.array.tau,
            rho: 1.0,
            sigma_v: signals.sigma_v,
        })?;
        let q = transform_pilot(&pilot, signals.rho, cfg.array.n_rx)?;
        if q.signal_dim() != signals.dim() {
            return Err(Error::Config("replay signal width does not match the pilot".into()));
        }
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            channels,
            signals,
            q,
        })
    }

    /// Training-prefix length T.
    pub fn train_len(&self) -> usize {
        self.cfg.data.train_len
    }

    /// Signals of the training prefix.
    pub fn train_signals(&self) -> &[ComplexVector] {
        &self.signals.observations[..self.train_len()]
    }

    /// Channel labels of the training prefix.
    pub fn train_labels(&self) -> Vec<ComplexVector> {
        self.channels.vectors(0..self.train_len())
    }

    /// True channels of the evaluation horizon.
    pub fn horizon_truth(&self) -> Vec<ComplexVector> {
        let t = self.train_len();
        self.channels.vectors(t..t + self.cfg.data.horizon)
    }

    /// Signals replayed by the recursive predictors: the last `warmup`
    /// training slots followed by the horizon slots before the final one.
    pub fn evaluation_signals(&self) -> &[ComplexVector] {
        let t = self.train_len();
        let w = self.cfg.warmup();
        &self.signals.observations[t - w..t + self.cfg.data.horizon - 1]
    }

    /// Identification on the training prefix only.
    pub fn fit(&self) -> Result<(ArModel, Ssm)> {
        let prefix = self.signals.slice(0..self.train_len());
        Ok(identify(&prefix, &self.q, self.cfg.model.p, self.cfg.model.epsilon)?)
    }

    /// Training configuration for a learned-gain strategy.
    pub fn train_config(&self, strategy: Strategy) -> TrainConfig {
        let t = &self.cfg.training;
        TrainConfig {
            t_s: t.t_s,
            n_b: t.n_b,
            n_e: t.n_e,
            lr: t.lr,
            beta: t.beta,
            strategy,
            label_noise: if strategy.needs_labels() { t.label_noise } else { None },
            gru_update: t.gru_update,
            seed: derive_seed(self.seed, STREAM_TRAIN),
        }
    }

    /// Freshly initialized gain network for `ssm`.
    pub fn initial_network(&self, ssm: &Ssm) -> Result<KpinNetwork> {
        Ok(KpinNetwork::new(
            ssm.signal_dim(),
            ssm.state_dim(),
            self.cfg.training.hidden_dim,
            derive_seed(self.seed, STREAM_INIT),
        )?)
    }

    /// Trains a gain network, timing every epoch.
    pub fn train(&self, ssm: &Ssm, strategy: Strategy) -> Result<TrainedNetwork> {
        let labels = strategy.needs_labels().then(|| self.train_labels());
        let cfg = self.train_config(strategy);
        let mut trainer = Trainer::new(self.train_signals(), ssm, self.initial_network(ssm)?, cfg.clone(), labels.as_deref())?;
        let mut epoch_ms = Vec::with_capacity(cfg.n_e);
        for _ in 0..cfg.n_e {
            let start = Instant::now();
            trainer.run_epoch()?;
            epoch_ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
        let out = trainer.finish();
        Ok(TrainedNetwork {
            net: out.net,
            loss_curve: out.loss_curve,
            epoch_ms,
        })
    }

    /// Learned-gain predictions over the horizon.
    pub fn kpin_trace(&self, ssm: &Ssm, net: &KpinNetwork) -> Result<PredictionTrace> {
        let signals = self.evaluation_signals();
        let trace = test(signals, ssm, net, signals.len(), self.cfg.training.gru_update)?;
        Ok(trace.skip(self.cfg.warmup() - 1).with_truth(&self.horizon_truth())?)
    }

    /// Kalman predictions over the horizon.
    pub fn arkf_trace(&self, ssm: &Ssm) -> Result<PredictionTrace> {
        let signals = self.evaluation_signals();
        let trace = arkf_predict(signals, ssm, KalmanState::stationary(ssm)?, signals.len())?;
        Ok(trace.skip(self.cfg.warmup() - 1).with_truth(&self.horizon_truth())?)
    }

    /// AR predictions over the horizon from true past channels.
    pub fn ar_trace(&self, ar: &ArModel) -> Result<PredictionTrace> {
        let t = self.train_len();
        let h = self.channels.vectors(t - ar.p..t + self.cfg.data.horizon);
        Ok(ar_predict(&h, ar, self.cfg.data.horizon)?.with_truth(&self.horizon_truth())?)
    }

    /// Report for a scored trace.
    pub fn report(&self, method: &str, trace: &PredictionTrace) -> Result<EvalReport> {
        let nses = trace.nses().ok_or_else(|| Error::Config("trace was not scored".into()))?;
        let rate = mean_rate(
            &trace.h_preds(),
            self.cfg.array.n_rx,
            self.cfg.array.n_tx,
            self.q.rho,
            self.cfg.signal.sigma_v,
        )
        .unwrap_or(f64::NAN);
        let mut report = EvalReport::new(method, self.seed, nses, rate)?;
        report.config_hash = self.cfg.hash();
        Ok(report)
    }
}

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    /// Final network.
    pub net: KpinNetwork,
    /// Objective per epoch.
    pub loss_curve: Vec<f64>,
    /// Wall time per epoch in milliseconds.
    pub epoch_ms: Vec<f64>,
}

/// Result of one method on one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRun {
    /// Evaluation report.
    pub report: EvalReport,
    /// Training objective per epoch (learned-gain methods only).
    pub loss_curve: Vec<f64>,
    /// Training wall time per epoch in milliseconds.
    pub epoch_ms: Vec<f64>,
}

impl MethodRun {
    /// Mean epoch wall time, NaN when untrained.
    pub fn mean_epoch_ms(&self) -> f64 {
        if self.epoch_ms.is_empty() {
            f64::NAN
        } else {
            self.epoch_ms.iter().sum::<f64>() / self.epoch_ms.len() as f64
        }
    }
}

/// Runs `methods` on one seed.
pub fn run_seed(cfg: &ScenarioConfig, seed: u64, methods: &[Method]) -> Result<Vec<MethodRun>> {
    let scenario = Scenario::generate(cfg, seed)?;
    let (ar, ssm) = scenario.fit()?;
    methods
        .iter()
        .map(|&method| {
            let (trace, trained) = match method.strategy() {
                None if method == Method::Ar => (scenario.ar_trace(&ar)?, None),
                None => (scenario.arkf_trace(&ssm)?, None),
                Some(strategy) => {
                    let trained = scenario.train(&ssm, strategy)?;
                    (scenario.kpin_trace(&ssm, &trained.net)?, Some(trained))
                }
            };
            let report = scenario.report(method.label(), &trace)?;
            let (loss_curve, epoch_ms) = trained.map(|t| (t.loss_curve, t.epoch_ms)).unwrap_or_default();
            Ok(MethodRun {
                report,
                loss_curve,
                epoch_ms,
            })
        })
        .collect()
}

/// Per-method statistics over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// Method label.
    pub method: String,
    /// Seeds that completed.
    pub runs: usize,
    /// Median NMSE in dB.
    pub median_nmse_db: f64,
    /// Mean NMSE in dB.
    pub mean_nmse_db: f64,
    /// Sample standard deviation of NMSE in dB.
    pub std_nmse_db: f64,
    /// Mean achievable rate.
    pub mean_rate: f64,
}

/// Outcome of a scenario over all seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    /// Configuration hash.
    pub config_hash: String,
    /// Every run in (seed, method) order.
    pub runs: Vec<MethodRun>,
    /// Seeds that failed, with the diagnostic.
    pub failures: Vec<(u64, String)>,
    /// Per-method statistics.
    pub summary: Vec<MethodSummary>,
}

impl ScenarioResult {
    /// Summary row of `method`.
    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Reports of `method` in seed order.
    pub fn reports_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a EvalReport> + 'a {
        self.runs.iter().map(|r| &r.report).filter(move |r| r.method == method)
    }
}

/// Median of a sample (NaN when empty).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Summaries per method, in the given method order.
pub fn summarize(runs: &[MethodRun], methods: &[Method]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|m| {
            let reports: Vec<&EvalReport> = runs.iter().map(|r| &r.report).filter(|r| r.method == m.label()).collect();
            let nmse: Vec<f64> = reports.iter().map(|r| r.nmse_db).collect();
            let rates: Vec<f64> = reports.iter().map(|r| r.rate_bits_per_s_per_hz).collect();
            let (mean, std) = mean_std(&nmse);
            MethodSummary {
                method: m.label().to_string(),
                runs: reports.len(),
                median_nmse_db: median(&nmse),
                mean_nmse_db: mean,
                std_nmse_db: std,
                mean_rate: mean_std(&rates).0,
            }
        })
        .collect()
}

/// Runs every seed of `cfg` in parallel; failing seeds are logged and
/// skipped, results are kept in seed order.
pub fn run_scenario(cfg: &ScenarioConfig, methods: &[Method]) -> Result<ScenarioResult> {
    cfg.validate()?;
    let outcomes: Vec<(u64, Result<Vec<MethodRun>>)> =
        cfg.run.seeds.par_iter().map(|&seed| (seed, run_seed(cfg, seed, methods))).collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.extend(r),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    Ok(ScenarioResult {
        config_hash: cfg.hash(),
        summary: summarize(&runs, methods),
        runs,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }

    #[test]
    fn evaluation_window_alignment() {
        let mut cfg = ScenarioConfig::default();
        cfg.data.train_len = 40;
        cfg.data.horizon = 5;
        cfg.training.n_b = 2;
        cfg.training.t_s = 10;
        let s = Scenario::generate(&cfg, 1).unwrap();
        let w = cfg.warmup();
        assert_eq!(s.evaluation_signals().len(), w + 5 - 1);
        assert_eq!(s.evaluation_signals()[0], s.signals.observations[40 - w]);
        assert_eq!(s.horizon_truth()[0], s.channels.h(40));
    }
}
