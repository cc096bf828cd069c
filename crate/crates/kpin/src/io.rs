//! File formats: binary replay files, JSON model files, network checkpoints
//! and CSV outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use kpin_core::ar_ssm::{ArModel, Ssm};
use kpin_core::channel::ChannelSequence;
use kpin_core::ftp::PredictionTrace;
use kpin_core::metrics::{to_db, EvalReport};
use kpin_core::net::KpinNetwork;
use kpin_core::numerics::{ComplexMatrix, ComplexVector};
use kpin_core::C64;
use kpin_core::signal::SignalSequence;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, IoContext, Result};

const REPLAY_MAGIC: &[u8; 4] = b"KPRP";
const CHECKPOINT_MAGIC: &[u8; 4] = b"KPCK";
/// Current version of both binary formats.
pub const FORMAT_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    Ok(BufWriter::new(File::create(path).at(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).at(path)?))
}

struct Le<W>(W);

impl<W: Write> Le<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn c64s(&mut self, xs: &[C64]) -> std::io::Result<()> {
        for z in xs {
            self.f64(z.re)?;
            self.f64(z.im)?;
        }
        Ok(())
    }
}

struct LeRead<R>(R);

impl<R: Read> LeRead<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
            _ => Error::Stream(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn c64s(&mut self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if &self.bytes::<4>()? != magic {
            return Err(Error::Format("bad magic".into()));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        Ok(())
    }
}

/// Contents of a replay file.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    /// Channel sequence.
    pub channels: ChannelSequence,
    /// Received signals, if stored.
    pub signals: Option<SignalSequence>,
}

/// Writes channels (and optionally signals) as little-endian binary.
///
/// Layout: magic, version, then `N, M, T` (u64), `slot_ms` (f64), `seed`
/// (u64), `T·N·M` interleaved re/im doubles in row-major frame order, then a
/// u64 flag. When the flag is 1, the signal block follows: `T, dim, seed`
/// (u64), `sigma_v, rho` (f64) and `T·dim` interleaved doubles.
pub fn write_replay<W: Write>(out: W, channels: &ChannelSequence, signals: Option<&SignalSequence>) -> Result<()> {
    let mut w = Le(out);
    w.0.write_all(REPLAY_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u64(channels.n_rx as u64)?;
    w.u64(channels.n_tx as u64)?;
    w.u64(channels.len() as u64)?;
    w.f64(channels.slot_ms)?;
    w.u64(channels.seed)?;
    for f in channels.frames() {
        w.c64s(f.as_slice())?;
    }
    match signals {
        None => w.u64(0)?,
        Some(s) => {
            w.u64(1)?;
            w.u64(s.len() as u64)?;
            w.u64(s.dim() as u64)?;
            w.u64(s.seed)?;
            w.f64(s.sigma_v)?;
            w.f64(s.rho)?;
            for y in &s.observations {
                w.c64s(y.as_slice())?;
            }
        }
    }
    w.0.flush()?;
    Ok(())
}

/// Reads a replay stream written by [`write_replay`].
pub fn read_replay<R: Read>(input: R) -> Result<Replay> {
    let mut r = LeRead(input);
    r.header(REPLAY_MAGIC)?;
    let n_rx = r.usize()?;
    let n_tx = r.usize()?;
    let len = r.usize()?;
    let slot_ms = r.f64()?;
    let seed = r.u64()?;
    let frames = (0..len)
        .map(|_| Ok(ComplexMatrix::from_row_major(n_rx, n_tx, r.c64s(n_rx * n_tx)?)?))
        .collect::<Result<Vec<_>>>()?;
    let channels = ChannelSequence::new(n_rx, n_tx, slot_ms, seed, frames)?;
    let signals = match r.u64()? {
        0 => None,
        1 => {
            let len = r.usize()?;
            let dim = r.usize()?;
            let seed = r.u64()?;
            let sigma_v = r.f64()?;
            let rho = r.f64()?;
            let observations = (0..len)
                .map(|_| Ok(ComplexVector(r.c64s(dim)?)))
                .collect::<Result<Vec<_>>>()?;
            Some(SignalSequence {
                observations,
                sigma_v,
                rho,
                seed,
            })
        }
        f => return Err(Error::Format(format!("bad signal flag {f}"))),
    };
    Ok(Replay { channels, signals })
}

/// Writes a replay file to `path`.
pub fn save_replay(path: &Path, channels: &ChannelSequence, signals: Option<&SignalSequence>) -> Result<()> {
    write_replay(create(path)?, channels, signals)
}

/// Loads a replay file.
pub fn load_replay(path: &Path) -> Result<Replay> {
    read_replay(open(path)?)
}

/// Identified model as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    /// Hash of the config the model was fitted under.
    pub config_hash: String,
    /// Scenario seed.
    pub seed: u64,
    /// AR model.
    pub ar: ArModel,
    /// Companion state-space model.
    pub ssm: Ssm,
}

/// Writes a model file as pretty JSON.
pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, model)?;
    w.flush().at(path)?;
    Ok(())
}

/// Reads a model file.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// A network snapshot with the epoch it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Completed epochs.
    pub epoch: u64,
    /// Network parameters.
    pub net: KpinNetwork,
}

/// Writes a checkpoint.
///
/// Layout: magic, version, `signal_dim, state_dim, hidden_dim, seed, epoch,
/// n_params` (u64), then every tensor's doubles in declared order.
pub fn write_checkpoint<W: Write>(out: W, ckpt: &Checkpoint) -> Result<()> {
    let net = &ckpt.net;
    let mut w = Le(out);
    w.0.write_all(CHECKPOINT_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    for v in [net.signal_dim(), net.state_dim(), net.hidden_dim()] {
        w.u64(v as u64)?;
    }
    w.u64(net.seed())?;
    w.u64(ckpt.epoch)?;
    w.u64(net.param_count() as u64)?;
    for &x in net.params() {
        w.f64(x)?;
    }
    w.0.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint> {
    let mut r = LeRead(input);
    r.header(CHECKPOINT_MAGIC)?;
    let signal_dim = r.usize()?;
    let state_dim = r.usize()?;
    let hidden_dim = r.usize()?;
    let seed = r.u64()?;
    let epoch = r.u64()?;
    let n = r.usize()?;
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let net = KpinNetwork::from_params(signal_dim, state_dim, hidden_dim, seed, params)?;
    Ok(Checkpoint { epoch, net })
}

/// Writes a checkpoint to `path`.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_checkpoint(create(path)?, ckpt)
}

/// Loads a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(open(path)?)
}

/// Writes a trace as CSV with columns `t, nse_db` and, when `entries` is
/// set, `re_i, im_i` for each predicted channel entry.
pub fn write_trace_csv<W: Write>(out: W, trace: &PredictionTrace, first_slot: usize, entries: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = trace.records().first().map_or(0, |r| r.h_pred.len());
    let mut header = vec!["t".to_string(), "nse_db".to_string()];
    if entries {
        for i in 0..dim {
            header.push(format!("re_{i}"));
            header.push(format!("im_{i}"));
        }
    }
    w.write_record(&header)?;
    let nses = trace.nses();
    for (i, rec) in trace.records().iter().enumerate() {
        let mut row = vec![
            (first_slot + i).to_string(),
            nses.map_or(String::new(), |n| to_db(n[i]).to_string()),
        ];
        if entries {
            for z in rec.h_pred.as_slice() {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a training log with columns `epoch, objective, wall_ms`.
pub fn write_training_log<W: Write>(out: W, loss_curve: &[f64], epoch_ms: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "objective", "wall_ms"])?;
    for (i, (l, ms)) in loss_curve.iter().zip(epoch_ms).enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string(), ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV row per evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Method label.
    pub method: String,
    /// Scenario seed.
    pub seed: u64,
    /// NMSE over the horizon in dB.
    pub nmse_db: f64,
    /// Mean achievable rate.
    pub rate: f64,
    /// Resolved config hash.
    pub config_hash: String,
}

impl From<&EvalReport> for ReportRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            method: r.method.clone(),
            seed: r.seed,
            nmse_db: r.nmse_db,
            rate: r.rate_bits_per_s_per_hz,
            config_hash: r.config_hash.clone(),
        }
    }
}

/// Writes reports as CSV rows.
pub fn write_reports_csv<W: Write>(out: W, reports: &[&EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(ReportRow::from(*r))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON sidecar: the reports together with the full resolved config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSidecar {
    /// Hash of `config`.
    pub config_hash: String,
    /// Resolved config.
    pub config: ScenarioConfig,
    /// Full reports including per-step NSE.
    pub reports: Vec<EvalReport>,
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`.
pub fn save_reports(dir: &Path, stem: &str, cfg: &ScenarioConfig, reports: &[&EvalReport]) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    write_reports_csv(create(&csv_path)?, reports)?;
    let json_path = dir.join(format!("{stem}.json"));
    let sidecar = ReportSidecar {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        reports: reports.iter().map(|r| (*r).clone()).collect(),
    };
    let mut w = create(&json_path)?;
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.flush().at(&json_path)?;
    Ok(())
}

