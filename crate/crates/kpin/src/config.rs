//! Scenario configuration, read from TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use kpin_core::training::Strategy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

/// Predictors a scenario can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// AR extrapolation from true past channels.
    #[serde(rename = "AR")]
    Ar,
    /// Kalman filter-then-predict on the identified model.
    #[serde(rename = "ARKF")]
    Arkf,
    /// Learned gain trained on received signals only.
    #[serde(rename = "KPIN")]
    Kpin,
    /// Learned gain supervised on filtered channel estimates.
    #[serde(rename = "S1")]
    S1,
    /// Learned gain supervised on predicted channels.
    #[serde(rename = "S2")]
    S2,
}

impl Method {
    /// Every method, in report order.
    pub const ALL: [Method; 5] = [Method::Ar, Method::Arkf, Method::Kpin, Method::S1, Method::S2];

    /// Report label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ar => "AR",
            Method::Arkf => "ARKF",
            Method::Kpin => "KPIN",
            Method::S1 => "S1",
            Method::S2 => "S2",
        }
    }

    /// Training strategy of the learned-gain methods.
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Method::Kpin => Some(Strategy::Unsupervised),
            Method::S1 => Some(Strategy::FilterSupervised),
            Method::S2 => Some(Strategy::PredictionSupervised),
            Method::Ar | Method::Arkf => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Channel generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Sum-of-sinusoids multipath surrogate.
    Surrogate,
    /// Exact vector AR process with `Φ_j = φ_j·I`.
    ArOracle,
}

/// Antenna setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Receive antennas N.
    pub n_rx: usize,
    /// Transmit antennas M.
    pub n_tx: usize,
    /// Pilot length τ.
    pub tau: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { n_rx: 4, n_tx: 2, tau: 2 }
    }
}

/// Channel generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Generator kind.
    pub kind: ChannelKind,
    /// UE speed in km/h.
    pub speed_kmh: f64,
    /// Carrier in GHz.
    pub carrier_ghz: f64,
    /// Slot duration in coherence times.
    pub aging: f64,
    /// Surrogate multipath count.
    pub n_paths: usize,
    /// Surrogate exponential power decay per path.
    pub power_decay: f64,
    /// Optional dominant-path ratio in dB.
    pub rician_k_db: Option<f64>,
    /// AR-oracle coefficients, one per lag.
    pub ar_phi: Vec<f64>,
    /// AR-oracle innovation variance per entry.
    pub ar_sigma_u: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Surrogate,
            speed_kmh: 60.0,
            carrier_ghz: 28.0,
            aging: 1.0,
            n_paths: 12,
            power_decay: 0.1,
            rician_k_db: None,
            ar_phi: vec![0.9],
            ar_sigma_u: 0.19,
        }
    }
}

/// Noise and power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// Received SNR in dB.
    pub snr_db: f64,
    /// Noise standard deviation σ_v.
    pub sigma_v: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            sigma_v: 0.01,
        }
    }
}

/// AR identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// AR order p.
    pub p: usize,
    /// Tikhonov shift on the block Toeplitz matrix. When absent, a tiny
    /// shift relative to its mean diagonal is used.
    pub epsilon: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { p: 2, epsilon: Some(3e-3) }
    }
}

/// Data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training prefix length T.
    pub train_len: usize,
    /// Evaluation horizon L.
    pub horizon: usize,
    /// Slots of the training prefix replayed before the horizon by the
    /// recursive predictors; T_s when absent.
    pub warmup: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_len: 400,
            horizon: 50,
            warmup: None,
        }
    }
}

/// Learned-gain training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Subsequence length T_s.
    pub t_s: usize,
    /// Batch size n_b.
    pub n_b: usize,
    /// Epochs n_e.
    pub n_e: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Weight of the `‖ψ‖` penalty.
    pub beta: f64,
    /// GRU width; `4·in_dim` when absent.
    pub hidden_dim: Option<usize>,
    /// Relative label noise for the supervised strategies.
    pub label_noise: Option<f64>,
    /// Whether the GRU hidden state is propagated.
    pub gru_update: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            t_s: 40,
            n_b: 5,
            n_e: 2000,
            lr: 1e-3,
            beta: 1e-5,
            hidden_dim: Some(32),
            label_noise: None,
            gru_update: true,
        }
    }
}

/// Monte Carlo setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// One run per seed.
    pub seeds: Vec<u64>,
    /// Methods to evaluate.
    pub methods: Vec<Method>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            methods: vec![Method::Ar, Method::Arkf, Method::Kpin],
        }
    }
}

/// Full scenario description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Antennas and pilot.
    pub array: ArrayConfig,
    /// Channel generator.
    pub channel: ChannelConfig,
    /// Noise and power.
    pub signal: SignalConfig,
    /// AR identification.
    pub model: ModelConfig,
    /// Data split.
    pub data: DataConfig,
    /// Learned-gain training.
    pub training: TrainingConfig,
    /// Seeds and methods.
    pub run: RunConfig,
}

impl ScenarioConfig {
    /// Parses TOML text; missing keys take defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).at(path)?)
    }

    /// TOML rendering.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config is always representable in TOML")
    }

    /// Warm-up length actually used.
    pub fn warmup(&self) -> usize {
        self.data.warmup.unwrap_or(self.training.t_s)
    }

    /// Hex SHA-256 prefix of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario config is always representable in JSON");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Checks positivity and ordering constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let a = &self.array;
        if a.n_rx == 0 || a.n_tx == 0 {
            return bad("antenna counts must be positive".into());
        }
        if a.tau < a.n_tx {
            return bad(format!("tau ({}) must be at least n_tx ({})", a.tau, a.n_tx));
        }
        let c = &self.channel;
        if !(c.speed_kmh > 0.0 && c.carrier_ghz > 0.0 && c.aging > 0.0) {
            return bad("speed, carrier and aging must be positive".into());
        }
        if c.kind == ChannelKind::Surrogate && c.n_paths == 0 {
            return bad("surrogate channel needs at least one path".into());
        }
        if c.kind == ChannelKind::ArOracle && (c.ar_phi.is_empty() || !(c.ar_sigma_u >= 0.0)) {
            return bad("AR-oracle channel needs coefficients and a non-negative innovation variance".into());
        }
        if !(self.signal.sigma_v > 0.0) || !self.signal.snr_db.is_finite() {
            return bad("sigma_v must be positive and snr_db finite".into());
        }
        if self.model.p == 0 {
            return bad("AR order p must be positive".into());
        }
        if matches!(self.model.epsilon, Some(e) if !(e >= 0.0)) {
            return bad("epsilon must be non-negative".into());
        }
        let d = &self.data;
        let t = &self.training;
        if d.horizon == 0 || d.train_len == 0 {
            return bad("train_len and horizon must be positive".into());
        }
        if self.warmup() == 0 || self.warmup() > d.train_len {
            return bad(format!("warmup must be in 1..={}", d.train_len));
        }
        if d.train_len <= self.model.p {
            return bad("train_len must exceed p".into());
        }
        if t.t_s == 0 || t.n_b == 0 {
            return bad("t_s and n_b must be positive".into());
        }
        if t.n_b > d.train_len / t.t_s {
            return bad(format!("n_b ({}) exceeds floor(T/T_s) = {}", t.n_b, d.train_len / t.t_s));
        }
        if !(t.lr >= 0.0 && t.beta >= 0.0) {
            return bad("lr and beta must be non-negative".into());
        }
        if t.hidden_dim == Some(0) {
            return bad("hidden_dim must be positive".into());
        }
        if self.run.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        Ok(())
    }
}
