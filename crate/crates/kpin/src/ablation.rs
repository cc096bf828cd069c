//! Named one-axis sweeps over a base scenario.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use kpin_core::metrics::EvalReport;
use serde::{Deserialize, Serialize};

use crate::config::{Method, ScenarioConfig};
use crate::error::{Error, Result};
use crate::harness::{median, run_scenario, MethodRun};

/// A sweepable axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// S1, S2 and S3 on the base scenario.
    Strategies,
    /// Learned gain with and without the hidden-state update.
    GruUpdate,
    /// Mini-batch size n_b.
    BatchSize,
    /// Signal-to-noise ratio in dB.
    SnrSweep,
    /// Dynamic condition k.
    AgingSweep,
    /// Receive antennas N.
    AntennaSweep,
    /// Training length T.
    TrainLength,
    /// Relative label noise for the supervised strategies.
    LabelNoise,
}

impl Ablation {
    /// Every ablation, in a fixed order.
    pub const ALL: [Ablation; 8] = [
        Ablation::Strategies,
        Ablation::GruUpdate,
        Ablation::BatchSize,
        Ablation::SnrSweep,
        Ablation::AgingSweep,
        Ablation::AntennaSweep,
        Ablation::TrainLength,
        Ablation::LabelNoise,
    ];

    /// Name used on the command line and in output files.
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Strategies => "strategies",
            Ablation::GruUpdate => "gru_update",
            Ablation::BatchSize => "batch_size",
            Ablation::SnrSweep => "snr_sweep",
            Ablation::AgingSweep => "aging_sweep",
            Ablation::AntennaSweep => "antenna_sweep",
            Ablation::TrainLength => "train_length",
            Ablation::LabelNoise => "label_noise",
        }
    }

    /// Axis values of the default grid.
    pub fn grid(self) -> Vec<f64> {
        match self {
            Ablation::Strategies => vec![0.0],
            Ablation::GruUpdate => vec![1.0, 0.0],
            Ablation::BatchSize => vec![1.0, 5.0, 10.0, 20.0],
            Ablation::SnrSweep => vec![10.0, 15.0, 20.0, 25.0, 30.0],
            Ablation::AgingSweep => vec![0.5, 1.0, 2.0],
            Ablation::AntennaSweep => vec![2.0, 4.0, 8.0],
            Ablation::TrainLength => vec![200.0, 400.0, 800.0],
            Ablation::LabelNoise => vec![0.0, 0.01, 0.05, 0.1],
        }
    }

    /// Methods run at each point.
    pub fn methods(self) -> Vec<Method> {
        match self {
            Ablation::Strategies | Ablation::LabelNoise => vec![Method::S1, Method::S2, Method::Kpin],
            Ablation::GruUpdate | Ablation::BatchSize => vec![Method::Kpin],
            _ => vec![Method::Ar, Method::Arkf, Method::Kpin],
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Strategies => {}
            Ablation::GruUpdate => cfg.training.gru_update = value != 0.0,
            Ablation::BatchSize => {
                // every batch size must fit in the number of subsequences
                cfg.training.n_b = value as usize;
                let grid_max = self.grid().into_iter().fold(0.0, f64::max) as usize;
                cfg.data.train_len = cfg.data.train_len.max(grid_max * cfg.training.t_s);
            }
            Ablation::SnrSweep => cfg.signal.snr_db = value,
            Ablation::AgingSweep => cfg.channel.aging = value,
            Ablation::AntennaSweep => cfg.array.n_rx = value as usize,
            Ablation::TrainLength => cfg.data.train_len = value as usize,
            Ablation::LabelNoise => cfg.training.label_noise = (value > 0.0).then_some(value),
        }
        cfg
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAblation(s.to_string()))
    }
}

/// One (axis value, method, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Axis name.
    pub axis: String,
    /// Axis value.
    pub value: f64,
    /// Method label.
    pub method: String,
    /// Scenario seed.
    pub seed: u64,
    /// NMSE over the horizon in dB.
    pub nmse_db: f64,
    /// Mean achievable rate.
    pub rate: f64,
    /// Mean training epoch wall time, NaN for untrained methods.
    pub epoch_ms: f64,
    /// Per-step NSE in dB.
    #[serde(skip)]
    pub nse_per_step_db: Vec<f64>,
}

impl AblationRow {
    fn new(axis: Ablation, value: f64, run: &MethodRun) -> Self {
        let r: &EvalReport = &run.report;
        Self {
            axis: axis.name().to_string(),
            value,
            method: r.method.clone(),
            seed: r.seed,
            nmse_db: r.nmse_db,
            rate: r.rate_bits_per_s_per_hz,
            epoch_ms: run.mean_epoch_ms(),
            nse_per_step_db: r.nse_per_step_db.clone(),
        }
    }
}

/// Result table of one ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Which ablation.
    pub ablation: Ablation,
    /// Rows in (value, seed, method) order.
    pub rows: Vec<AblationRow>,
    /// Seeds that failed, per axis value.
    pub failures: Vec<(f64, u64, String)>,
}

impl AblationTable {
    /// Rows of `method` at `value`.
    pub fn select<'a>(&'a self, value: f64, method: &'a str) -> impl Iterator<Item = &'a AblationRow> + 'a {
        self.rows.iter().filter(move |r| r.value == value && r.method == method)
    }

    /// Median NMSE of `method` at `value`.
    pub fn median_nmse_db(&self, value: f64, method: &str) -> f64 {
        median(&self.select(value, method).map(|r| r.nmse_db).collect::<Vec<_>>())
    }

    /// Median epoch time of `method` at `value`.
    pub fn median_epoch_ms(&self, value: f64, method: &str) -> f64 {
        median(&self.select(value, method).map(|r| r.epoch_ms).collect::<Vec<_>>())
    }

    /// Writes the long-format CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `ablation` over its default grid.
pub fn run_ablation(ablation: Ablation, base: &ScenarioConfig) -> Result<AblationTable> {
    run_ablation_grid(ablation, base, &ablation.grid())
}

/// Runs `ablation` over explicit axis values.
pub fn run_ablation_grid(ablation: Ablation, base: &ScenarioConfig, grid: &[f64]) -> Result<AblationTable> {
    let methods = ablation.methods();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &value in grid {
        let cfg = ablation.apply(base, value);
        log::info!("{ablation} = {value}");
        let result = run_scenario(&cfg, &methods)?;
        rows.extend(result.runs.iter().map(|run| AblationRow::new(ablation, value, run)));
        failures.extend(result.failures.into_iter().map(|(s, e)| (value, s, e)));
    }
    Ok(AblationTable {
        ablation,
        rows,
        failures,
    })
}
