//! `rbc`: one entry point for every stage.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 missing input,
//! 4 validation failure, 5 runtime failure.

mod server;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbc_core::arena::{run_spec_match, ArenaError, BotSpec};
use rbc_core::config::{write_run_dir, ConfigError, RunConfig};
use rbc_core::neural::{gradcheck, GradcheckConfig, NetworkConfig};
use rbc_core::pipeline::{self, PipelineError};
use rbc_core::record::ingest;

/// Why a command failed; selects the exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    MissingInput(String),
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::MissingInput(_) => 3,
            Failure::Validation(_) => 4,
            Failure::Runtime(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::MissingInput(m) | Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => Failure::MissingInput(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::MissingInput(m) => Failure::MissingInput(m),
            PipelineError::Config(c) => c.into(),
            e @ PipelineError::Data { .. } => Failure::Validation(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ArenaError> for Failure {
    fn from(e: ArenaError) -> Self {
        match e {
            ArenaError::Spec { .. } | ArenaError::GameCount(_) => Failure::Config(e.to_string()),
            ArenaError::Checkpoint { .. } => Failure::MissingInput(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "rbc", version, about = "Reconnaissance Blind Chess agents: data, training, matches and a game server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML run config. Every key is optional; see configs/default.toml.
    #[arg(long, short = 'c', value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set sl.epochs=3`. Repeatable and
    /// applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Global seed; replaces every section's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            config.set(o)?;
        }
        if self.seed.is_some() {
            config.seed = self.seed;
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NetPreset {
    Tiny,
    Desk,
    Default,
}

impl NetPreset {
    fn config(self) -> NetworkConfig {
        match self {
            NetPreset::Tiny => NetworkConfig::tiny(),
            NetPreset::Desk => NetworkConfig::desk(),
            NetPreset::Default => NetworkConfig::default(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic games between scripted bots as JSON Lines.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory; `games.jsonl` is written inside. Defaults to
        /// `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of games (`data.games`).
        #[arg(long)]
        games: Option<usize>,
    },
    /// Supervised training on game records.
    TrainSl {
        #[command(flatten)]
        config: ConfigArgs,
        /// Game records (JSON Lines), e.g. from gen-data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory for `sl.ckpt`, metrics and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Epochs (`sl.epochs`).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// PPO self-play starting from a supervised checkpoint.
    TrainRl {
        #[command(flatten)]
        config: ConfigArgs,
        /// Supervised checkpoint seeding the pool (`rl.sl_checkpoint`).
        #[arg(long)]
        sl_checkpoint: Option<PathBuf>,
        /// Run directory for the pool, checkpoints, metrics and records.
        #[arg(long)]
        out: Option<PathBuf>,
        /// PPO iterations (`rl.iterations`).
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Play a head-to-head match; bots are `random`, `greedy` or
    /// `net:<checkpoint>` with `:bias=x`, `:argmax`, `:sample=T`, `:mask`.
    Arena {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
        /// Even number of games (`arena.games`).
        #[arg(long)]
        games: Option<usize>,
        /// JSON report path; the table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the game server.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Address to listen on (`service.bind`); port 0 picks one.
        #[arg(long)]
        bind: Option<String>,
        /// Where finished games are stored (`service.data_dir`).
        #[arg(long, env = "RBC_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Concurrent unfinished games (`service.max_games`).
        #[arg(long)]
        max_games: Option<usize>,
    },
    /// Finite-difference check of the network gradients in 64-bit.
    Gradcheck {
        #[arg(long, value_enum, default_value = "tiny")]
        net: NetPreset,
        /// Coordinates sampled per parameter array.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check game records against the schema and the referee.
    ValidateData {
        file: PathBuf,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    out.unwrap_or_else(|| config.output_dir.clone())
}

fn write_report(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(runtime)?;
            }
            fs::write(p, text).map_err(runtime)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { config, out, games } => {
            let mut c = config.load()?;
            if let Some(g) = games {
                c.data.games = g;
            }
            let dir = out_dir(out, &c);
            let n = pipeline::gen_data(&c, &dir)?;
            println!("wrote {n} games to {}", dir.join(pipeline::GAMES_FILE).display());
        }
        Command::TrainSl { config, data, out, epochs } => {
            let mut c = config.load()?;
            if let Some(e) = epochs {
                c.sl.epochs = e;
            }
            let data = data.ok_or_else(|| Failure::MissingInput("train-sl needs --data <games.jsonl>; create one with gen-data".into()))?;
            let dir = out_dir(out, &c);
            let s = pipeline::train_sl(&c, &data, &dir)?;
            if let (Some(init), Some(last)) = (&s.initial, &s.last) {
                println!(
                    "move accuracy {:.4} (majority {:.4}, uniform {:.6}); initial move loss {:.4}",
                    last.move_accuracy, s.majority_rate, s.uniform_rate, init.move_loss
                );
            }
            println!("checkpoint {}", dir.join(pipeline::SL_CHECKPOINT).display());
        }
        Command::TrainRl { config, sl_checkpoint, out, iterations } => {
            let mut c = config.load()?;
            if let Some(i) = iterations {
                c.rl.iterations = i;
            }
            let dir = out_dir(out, &c);
            let s = pipeline::train_rl(&c, sl_checkpoint.as_deref(), &dir, |st| {
                eprintln!(
                    "iteration {} games {} score {:.3} entropy {:.3} pool {}",
                    st.iteration, st.games_played, st.score, st.ppo.entropy, st.pool_size
                );
            })?;
            println!("{} games, pool {:?}; checkpoint {}", s.games_played, s.snapshots, s.final_checkpoint.display());
        }
        Command::Arena { config, a, b, games, out } => {
            let mut c = config.load()?;
            if let Some(a) = a {
                c.arena.a = a.parse::<BotSpec>()?;
            }
            if let Some(b) = b {
                c.arena.b = b.parse::<BotSpec>()?;
            }
            if let Some(g) = games {
                c.arena.games = g;
            }
            c.resolve();
            c.validate()?;
            let r = run_spec_match(&c.arena.a, &c.arena.b, c.arena.games, c.arena.seed)?;
            print!("{}", r.table());
            if let Some(path) = out {
                write_report(Some(&path), &r)?;
            }
        }
        Command::Serve { config, bind, data_dir, max_games } => {
            let mut c = config.load()?;
            if let Some(b) = bind {
                c.service.bind = b;
            }
            if let Some(d) = data_dir {
                c.service.data_dir = d;
            }
            if let Some(m) = max_games {
                c.service.max_games = m;
            }
            c.validate()?;
            write_run_dir(&c.service.data_dir, &c, "serve")?;
            server::serve(&c.service).map_err(runtime)?;
        }
        Command::Gradcheck { net, samples, tolerance, seed, out } => {
            let mut g = GradcheckConfig {
                net: net.config(),
                ..Default::default()
            };
            if let Some(s) = samples {
                g.samples_per_tensor = s;
            }
            if let Some(t) = tolerance {
                g.tolerance = t;
            }
            if let Some(s) = seed {
                g.seed = s;
            }
            let report = gradcheck(&g).map_err(|e| Failure::Config(e.to_string()))?;
            write_report(out.as_deref(), &report)?;
            eprintln!(
                "max relative error {:.3e} over {} coordinates (tolerance {:.0e})",
                report.max_rel_error, report.checked, report.tolerance
            );
            if !report.passed {
                return Err(Failure::Validation("gradient check failed".into()));
            }
        }
        Command::ValidateData { file, out } => {
            if !file.is_file() {
                return Err(Failure::MissingInput(format!("{} does not exist", file.display())));
            }
            let ing = ingest(&file).map_err(runtime)?;
            let report = serde_json::json!({
                "file": file,
                "valid": ing.records.len(),
                "rejected": ing.rejected.len(),
                "errors": ing.rejected.iter().map(|(line, e)| serde_json::json!({"line": line, "error": e.to_string()})).collect::<Vec<_>>(),
            });
            write_report(out.as_deref(), &report)?;
            if !ing.rejected.is_empty() {
                return Err(Failure::Validation(format!(
                    "{} of {} records are invalid",
                    ing.rejected.len(),
                    ing.rejected.len() + ing.records.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
