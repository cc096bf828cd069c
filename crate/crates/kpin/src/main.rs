use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kpin::ablation::{run_ablation, Ablation};
use kpin::config::{ChannelKind, Method, ScenarioConfig};
use kpin::harness::{run_scenario, Scenario};
use kpin::io::{self, Checkpoint, ModelFile};
use kpin::{Error, Result};

#[derive(Parser)]
#[command(name = "kpin", version, about = "Learned-gain Kalman channel prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate channels and received signals into a replay file.
    Generate(Common),
    /// Identify the AR model and state-space model.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Replay file to fit on instead of regenerating the data.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Train a gain network and write a checkpoint and training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Learned-gain method to train.
        #[arg(long, default_value = "KPIN")]
        method: Method,
        /// Replay file to train on instead of regenerating the data.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over the horizon and write its trace.
    Test {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Model file written by `fit`; refitted when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Replay file to evaluate on instead of regenerating the data.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run every configured method on every seed.
    Run(Common),
    /// Run a named sweep.
    Ablate {
        /// One of strategies, gru_update, batch_size, snr_sweep,
        /// aging_sweep, antenna_sweep, train_length, label_noise, or all.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed (overrides the configured list).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Output format for results.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    n_rx: Option<usize>,
    #[arg(long)]
    n_tx: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    channel_kind: Option<ChannelKindArg>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    carrier: Option<f64>,
    #[arg(long)]
    aging: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    sigma_v: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    t_s: Option<usize>,
    #[arg(long)]
    n_b: Option<usize>,
    #[arg(long)]
    n_e: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    label_noise: Option<f64>,
    /// Freeze the GRU hidden state.
    #[arg(long)]
    no_gru_update: bool,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelKindArg {
    Surrogate,
    ArOracle,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.array.n_rx, &self.n_rx);
        set(&mut cfg.array.n_tx, &self.n_tx);
        set(&mut cfg.array.tau, &self.tau);
        if let Some(k) = self.channel_kind {
            cfg.channel.kind = match k {
                ChannelKindArg::Surrogate => ChannelKind::Surrogate,
                ChannelKindArg::ArOracle => ChannelKind::ArOracle,
            };
        }
        set(&mut cfg.channel.speed_kmh, &self.speed);
        set(&mut cfg.channel.carrier_ghz, &self.carrier);
        set(&mut cfg.channel.aging, &self.aging);
        set(&mut cfg.channel.n_paths, &self.n_paths);
        set(&mut cfg.signal.snr_db, &self.snr_db);
        set(&mut cfg.signal.sigma_v, &self.sigma_v);
        set(&mut cfg.model.p, &self.p);
        if self.epsilon.is_some() {
            cfg.model.epsilon = self.epsilon;
        }
        set(&mut cfg.data.train_len, &self.train_len);
        set(&mut cfg.data.horizon, &self.horizon);
        if self.warmup.is_some() {
            cfg.data.warmup = self.warmup;
        }
        set(&mut cfg.training.t_s, &self.t_s);
        set(&mut cfg.training.n_b, &self.n_b);
        set(&mut cfg.training.n_e, &self.n_e);
        set(&mut cfg.training.lr, &self.lr);
        set(&mut cfg.training.beta, &self.beta);
        if self.hidden_dim.is_some() {
            cfg.training.hidden_dim = self.hidden_dim;
        }
        if self.label_noise.is_some() {
            cfg.training.label_noise = self.label_noise;
        }
        if self.no_gru_update {
            cfg.training.gru_update = false;
        }
        set(&mut cfg.run.seeds, &self.seeds);
        set(&mut cfg.run.methods, &self.methods);
    }
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        self.overrides.apply(&mut cfg);
        if let Some(seed) = self.seed {
            cfg.run.seeds = vec![seed];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn seed(&self, cfg: &ScenarioConfig) -> u64 {
        self.seed.unwrap_or(cfg.run.seeds[0])
    }

    fn scenario(&self, cfg: &ScenarioConfig, replay: Option<&Path>) -> Result<Scenario> {
        let seed = self.seed(cfg);
        match replay {
            None => Scenario::generate(cfg, seed),
            Some(path) => {
                let r = io::load_replay(path)?;
                let signals = r
                    .signals
                    .ok_or_else(|| Error::Format(format!("{} holds no signals", path.display())))?;
                Scenario::from_replay(cfg, seed, r.channels, signals)
            }
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(std::io::BufWriter::new(f))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(common) => {
            let cfg = common.config()?;
            prepare(&common.out_dir)?;
            for &seed in &cfg.run.seeds {
                let s = Scenario::generate(&cfg, seed)?;
                let path = common.out_dir.join(format!("replay_seed{seed}.bin"));
                io::save_replay(&path, &s.channels, Some(&s.signals))?;
                println!("{}", path.display());
            }
        }
        Command::Fit { common, replay } => {
            let cfg = common.config()?;
            let s = common.scenario(&cfg, replay.as_deref())?;
            let (ar, ssm) = s.fit()?;
            prepare(&common.out_dir)?;
            let path = common.out_dir.join(format!("model_seed{}.json", s.seed));
            io::save_model(
                &path,
                &ModelFile {
                    config_hash: cfg.hash(),
                    seed: s.seed,
                    ar,
                    ssm,
                },
            )?;
            println!("{}", path.display());
        }
        Command::Train { common, method, replay } => {
            let cfg = common.config()?;
            let strategy = method
                .strategy()
                .ok_or_else(|| Error::Config(format!("{method} is not a learned-gain method")))?;
            let s = common.scenario(&cfg, replay.as_deref())?;
            let (_, ssm) = s.fit()?;
            let trained = s.train(&ssm, strategy)?;
            prepare(&common.out_dir)?;
            let stem = format!("{}_seed{}", method.label().to_lowercase(), s.seed);
            let ckpt = common.out_dir.join(format!("{stem}.ckpt"));
            io::save_checkpoint(
                &ckpt,
                &Checkpoint {
                    epoch: trained.loss_curve.len() as u64,
                    net: trained.net,
                },
            )?;
            let log_path = common.out_dir.join(format!("{stem}_training.csv"));
            io::write_training_log(file(&log_path)?, &trained.loss_curve, &trained.epoch_ms)?;
            println!("{}", ckpt.display());
        }
        Command::Test {
            common,
            checkpoint,
            model,
            replay,
        } => {
            let cfg = common.config()?;
            let s = common.scenario(&cfg, replay.as_deref())?;
            let ssm = match model {
                Some(path) => io::load_model(&path)?.ssm,
                None => s.fit()?.1,
            };
            let ckpt = io::load_checkpoint(&checkpoint)?;
            let trace = s.kpin_trace(&ssm, &ckpt.net)?;
            let report = s.report("KPIN", &trace)?;
            prepare(&common.out_dir)?;
            let trace_path = common.out_dir.join(format!("trace_seed{}.csv", s.seed));
            io::write_trace_csv(file(&trace_path)?, &trace, s.train_len(), true)?;
            match common.format {
                Format::Csv => io::save_reports(&common.out_dir, &format!("test_seed{}", s.seed), &cfg, &[&report])?,
                Format::Json => write_json(&common.out_dir.join(format!("test_seed{}.json", s.seed)), &report)?,
            }
            println!("KPIN seed {} NMSE {:.2} dB", s.seed, report.nmse_db);
        }
        Command::Run(common) => {
            let cfg = common.config()?;
            let result = run_scenario(&cfg, &cfg.run.methods)?;
            prepare(&common.out_dir)?;
            match common.format {
                Format::Csv => {
                    let reports: Vec<_> = result.runs.iter().map(|r| &r.report).collect();
                    io::save_reports(&common.out_dir, "reports", &cfg, &reports)?;
                }
                Format::Json => write_json(&common.out_dir.join("result.json"), &result)?,
            }
            for s in &result.summary {
                println!(
                    "{:<5} median {:>7.2} dB  mean {:>7.2} ± {:.2} dB  rate {:.3}",
                    s.method, s.median_nmse_db, s.mean_nmse_db, s.std_nmse_db, s.mean_rate
                );
            }
            for (seed, e) in &result.failures {
                eprintln!("seed {seed} failed: {e}");
            }
        }
        Command::Ablate { name, common } => {
            let cfg = common.config()?;
            let ablations = if name == "all" {
                Ablation::ALL.to_vec()
            } else {
                vec![name.parse::<Ablation>()?]
            };
            prepare(&common.out_dir)?;
            for a in ablations {
                let table = run_ablation(a, &cfg)?;
                match common.format {
                    Format::Csv => table.write_csv(file(&common.out_dir.join(format!("{a}.csv")))?)?,
                    Format::Json => write_json(&common.out_dir.join(format!("{a}.json")), &table.rows)?,
                }
                for &v in &a.grid() {
                    let cells: Vec<String> = a
                        .methods()
                        .iter()
                        .map(|m| format!("{} {:.2}", m, table.median_nmse_db(v, m.label())))
                        .collect();
                    println!("{a} {v}: {}", cells.join("  "));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
