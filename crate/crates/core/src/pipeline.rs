//! The training stages as functions over a [`RunConfig`] and a run
//! directory. Each writes `config.toml` and `manifest.json` first, then its
//! outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{write_run_dir, ConfigError, Manifest, RunConfig};
use crate::engine::Move;
use crate::encoding::{decode_move_index, MoveIndex, MOVE_ACTIONS};
use crate::neural::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NeuralError, PolicyValueNet};
use crate::record::{ingest, to_json_line, RecordError};
use crate::rl::{IterationStats, RlError, RlTrainer};
use crate::sl::{self, EvalMetrics, ExampleSet, SlError};

pub const GAMES_FILE: &str = "games.jsonl";
pub const SL_CHECKPOINT: &str = "sl.ckpt";
pub const RL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EPISODES_FILE: &str = "episodes.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {rejected} invalid records, first at line {line}: {first}")]
    Data {
        path: PathBuf,
        rejected: usize,
        line: usize,
        first: RecordError,
    },
    #[error(transparent)]
    Sl(#[from] SlError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn prepare(config: &RunConfig, out: &Path, command: &str) -> Result<(RunConfig, Manifest), PipelineError> {
    let mut config = config.clone();
    config.resolve();
    config.validate()?;
    let manifest = write_run_dir(out, &config, command)?;
    Ok((config, manifest))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    fs::write(path, serde_json::to_string_pretty(value).expect("summaries serialize") + "\n")?;
    Ok(())
}

/// Writes `config.data.games` synthetic games to `out/games.jsonl`.
pub fn gen_data(config: &RunConfig, out: &Path) -> Result<usize, PipelineError> {
    let (config, _) = prepare(config, out, "gen-data")?;
    Ok(sl::gen_synthetic_file(&config.data, out.join(GAMES_FILE))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlSummary {
    pub train_games: usize,
    pub test_games: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Chance of guessing a held-out move uniformly at random.
    pub uniform_rate: f64,
    /// Most frequent training move and its share of held-out moves.
    pub majority_move: Option<String>,
    pub majority_rate: f64,
    pub initial: Option<EvalMetrics>,
    pub last: Option<EvalMetrics>,
    pub epochs: usize,
    pub stopped_early: bool,
}

/// Trains a fresh network on the records in `data`, split by game.
/// Writes `sl.ckpt`, per-epoch `metrics.jsonl` and `summary.json`.
pub fn train_sl(config: &RunConfig, data: &Path, out: &Path) -> Result<SlSummary, PipelineError> {
    if !data.is_file() {
        return Err(PipelineError::MissingInput(format!(
            "training data {} does not exist; create it with gen-data",
            data.display()
        )));
    }
    let (config, _) = prepare(config, out, "train-sl")?;
    let ingested = ingest(data)?;
    if let Some((line, first)) = ingested.rejected.first() {
        return Err(PipelineError::Data {
            path: data.to_path_buf(),
            rejected: ingested.rejected.len(),
            line: *line,
            first: first.clone(),
        });
    }
    let (train_games, test_games) = sl::split(&ingested.records, config.sl.train_fraction, config.sl.seed)?;
    let train_set = ExampleSet::from_records(&train_games, config.sl.move_target)?;
    let test_set = ExampleSet::from_records(&test_games, config.sl.move_target)?;
    let mut net = PolicyValueNet::<f32>::new(config.network.clone())?;

    let mut log = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    let mut io_err = None;
    let metrics = sl::train(&mut net, &train_set, Some(&test_set), &config.sl, |m| {
        if let Err(e) = writeln!(log, "{}", serde_json::to_string(m).expect("metrics serialize")) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log.flush()?;

    let mut ckpt = Checkpoint::new(net);
    ckpt.meta.note = "sl".into();
    save_checkpoint(out.join(SL_CHECKPOINT), &ckpt)?;

    let majority = train_set.majority_move();
    let summary = SlSummary {
        train_games: train_games.len(),
        test_games: test_games.len(),
        train_examples: train_set.len(),
        test_examples: test_set.len(),
        uniform_rate: 1.0 / MOVE_ACTIONS as f64,
        majority_move: majority.map(|(i, _)| {
            MoveIndex::new(i)
                .and_then(|m| decode_move_index(m, None).ok())
                .map_or_else(|| format!("#{i}"), Move::uci)
        }),
        majority_rate: majority.map_or(0.0, |(i, _)| test_set.move_target_rate(i)),
        initial: metrics.initial.clone(),
        last: metrics.last_test().cloned(),
        epochs: metrics.epochs.len(),
        stopped_early: metrics.stopped_early,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlSummary {
    pub iterations: u64,
    pub games_played: u64,
    pub snapshots: Vec<String>,
    pub final_checkpoint: PathBuf,
}

fn snapshot_path(out: &Path, id: &str) -> PathBuf {
    out.join("pool").join(format!("{id}.ckpt"))
}

/// PPO self-play from the supervised checkpoint `sl`, which seeds both the
/// pool and the trainer. Writes the pool snapshots, periodic checkpoints,
/// `metrics.jsonl` (one line per iteration), sampled game records and
/// `final.ckpt`. `on_iteration` observes progress.
pub fn train_rl(
    config: &RunConfig,
    sl: Option<&Path>,
    out: &Path,
    mut on_iteration: impl FnMut(&IterationStats),
) -> Result<RlSummary, PipelineError> {
    let sl = sl.map(Path::to_path_buf).or_else(|| config.rl.sl_checkpoint.clone()).ok_or_else(|| {
        PipelineError::MissingInput(
            "train-rl needs a supervised checkpoint: pass --sl-checkpoint or set rl.sl_checkpoint".into(),
        )
    })?;
    if !sl.is_file() {
        return Err(PipelineError::MissingInput(format!(
            "supervised checkpoint {} does not exist; create it with train-sl",
            sl.display()
        )));
    }
    let (config, _) = prepare(config, out, "train-rl")?;
    let initial = load_checkpoint(&sl)?;
    fs::create_dir_all(out.join("pool"))?;
    fs::create_dir_all(out.join("checkpoints"))?;

    let mut trainer = RlTrainer::new(initial.net, config.ppo.clone())?;
    let mut snapshots = Vec::new();
    for (id, net) in trainer.snapshots() {
        save_snapshot(out, id, net)?;
        snapshots.push(id.to_string());
    }
    let mut metrics = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    let mut episodes = BufWriter::new(File::create(out.join(EPISODES_FILE))?);
    let every = config.rl.record_every;
    let mut index = 0u64;
    for it in 1..=config.rl.iterations {
        let mut io_err = None;
        let stats = trainer.run_iteration(|ep| {
            if every > 0 && index % every == 0 {
                if let Err(e) = writeln!(episodes, "{}", to_json_line(&ep.record)) {
                    io_err.get_or_insert(e);
                }
            }
            index += 1;
        })?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
        writeln!(metrics, "{}", serde_json::to_string(&stats).expect("stats serialize"))?;
        metrics.flush()?;
        if let Some(id) = &stats.new_snapshot {
            save_snapshot(out, id, trainer.snapshot(id).expect("new snapshot is stored"))?;
            snapshots.push(id.clone());
        }
        if config.rl.checkpoint_every > 0 && it % config.rl.checkpoint_every == 0 {
            save_checkpoint(out.join("checkpoints").join(format!("iter-{it:05}.ckpt")), &trainer.checkpoint("rl"))?;
        }
        on_iteration(&stats);
    }
    episodes.flush()?;
    let final_checkpoint = out.join(RL_CHECKPOINT);
    save_checkpoint(&final_checkpoint, &trainer.checkpoint("rl"))?;
    let summary = RlSummary {
        iterations: config.rl.iterations,
        games_played: trainer.games_played(),
        snapshots,
        final_checkpoint,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn save_snapshot(out: &Path, id: &str, net: &PolicyValueNet<f32>) -> Result<(), PipelineError> {
    let ckpt = Checkpoint {
        net: net.clone(),
        optimizer: None,
        meta: CheckpointMeta {
            games_played: 0,
            snapshot_id: Some(id.to_string()),
            note: "pool".into(),
        },
    };
    Ok(save_checkpoint(snapshot_path(out, id), &ckpt)?)
}
