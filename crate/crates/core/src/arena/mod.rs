//! Baseline bots, head-to-head matches and rating arithmetic.

mod bots;
mod net_player;

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bots::{inner_squares, move_preference, GreedyBot, RandomBot, Sighting};
pub use net_player::{Decision, Head, NetMode, NetPlayer};

use crate::engine::{Color, EngineError};
use crate::game::{play_game, GameSetup, Player};
use crate::neural::{load_checkpoint, NeuralError};
use crate::record::{GameRecord, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum ArenaError {
    #[error("match needs an even, nonzero number of games, got {0}")]
    GameCount(usize),
    #[error("win rate must lie strictly between 0 and 1, got {0}")]
    WinRate(f64),
    #[error("bad bot spec {spec:?}: {reason}")]
    Spec { spec: String, reason: String },
    #[error("loading {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: NeuralError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BotKind {
    Random,
    Greedy,
    Net { checkpoint: PathBuf, mode: NetMode },
}

/// A bot description as accepted on the command line:
/// `random`, `greedy`, `net:<checkpoint>` with optional `:`-separated
/// options `bias=<x>`, `argmax`, `sample=<temperature>` and `mask`.
/// Serializes as that same string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BotSpec {
    pub kind: BotKind,
    pub bias: f64,
    pub legal_mask: bool,
}

impl BotSpec {
    pub fn random() -> Self {
        Self {
            kind: BotKind::Random,
            bias: 0.0,
            legal_mask: false,
        }
    }

    pub fn greedy() -> Self {
        Self {
            kind: BotKind::Greedy,
            ..Self::random()
        }
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias = bias;
        self
    }

    pub fn build(&self) -> Result<Box<dyn Player>, ArenaError> {
        Ok(match &self.kind {
            BotKind::Random => Box::new(RandomBot::new(self.bias)),
            BotKind::Greedy => Box::new(GreedyBot::new(self.bias)),
            BotKind::Net { checkpoint, mode } => {
                let ckpt = load_checkpoint(checkpoint).map_err(|source| ArenaError::Checkpoint {
                    path: checkpoint.clone(),
                    source,
                })?;
                let name = format!("net:{}", checkpoint.display());
                Box::new(NetPlayer::new(Arc::new(ckpt.net), name, *mode).with_legal_mask(self.legal_mask))
            }
        })
    }
}

impl fmt::Display for BotSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BotKind::Random => f.write_str("random")?,
            BotKind::Greedy => f.write_str("greedy")?,
            BotKind::Net { checkpoint, mode } => {
                write!(f, "net:{}", checkpoint.display())?;
                match mode {
                    NetMode::Argmax => f.write_str(":argmax")?,
                    NetMode::Sample { temperature } => write!(f, ":sample={temperature}")?,
                }
            }
        }
        if self.bias != 0.0 {
            write!(f, ":bias={}", self.bias)?;
        }
        if self.legal_mask {
            f.write_str(":mask")?;
        }
        Ok(())
    }
}

impl From<BotSpec> for String {
    fn from(spec: BotSpec) -> String {
        spec.to_string()
    }
}

impl TryFrom<String> for BotSpec {
    type Error = ArenaError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for BotSpec {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| ArenaError::Spec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = s.split(':');
        let mut spec = match parts.next().unwrap_or_default() {
            "random" => BotSpec::random(),
            "greedy" => BotSpec::greedy(),
            "net" => {
                let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(|| bad("net needs a checkpoint path"))?;
                BotSpec {
                    kind: BotKind::Net {
                        checkpoint: PathBuf::from(path),
                        mode: NetMode::Argmax,
                    },
                    ..BotSpec::random()
                }
            }
            _ => return Err(bad("kind must be random, greedy or net")),
        };
        for opt in parts {
            let (key, value) = opt.split_once('=').unwrap_or((opt, ""));
            let number = || value.parse::<f64>().map_err(|_| bad(&format!("{key} needs a number")));
            match (key, &mut spec.kind) {
                ("bias", _) => spec.bias = number()?,
                ("mask", _) => spec.legal_mask = true,
                ("argmax", BotKind::Net { mode, .. }) => *mode = NetMode::Argmax,
                ("sample", BotKind::Net { mode, .. }) => {
                    let temperature = if value.is_empty() { 1.0 } else { number()? };
                    if !(temperature > 0.0) {
                        return Err(bad("temperature must be positive"));
                    }
                    *mode = NetMode::Sample { temperature };
                }
                _ => return Err(bad(&format!("unknown option {opt:?}"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
}

impl Tally {
    pub fn games(&self) -> usize {
        self.wins + self.draws + self.losses
    }

    /// Wins plus half the draws, over games played.
    pub fn score(&self) -> f64 {
        (self.wins as f64 + 0.5 * self.draws as f64) / self.games().max(1) as f64
    }

    fn add(&mut self, outcome: Outcome, color: Color) {
        match outcome.winner() {
            None => self.draws += 1,
            Some(w) if w == color => self.wins += 1,
            Some(_) => self.losses += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub a: String,
    pub b: String,
    pub games: usize,
    pub seed: u64,
    /// From A's side.
    pub total: Tally,
    pub a_as_white: Tally,
    pub a_as_black: Tally,
    pub score: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_plies: f64,
}

impl MatchResult {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, label: &str, t: &Tally| {
            let _ = writeln!(s, "{label:<10} {:>6} {:>6} {:>6} {:>6} {:>7.3}", t.games(), t.wins, t.draws, t.losses, t.score());
        };
        let _ = writeln!(s, "A = {}\nB = {}", self.a, self.b);
        let _ = writeln!(s, "{:<10} {:>6} {:>6} {:>6} {:>6} {:>7}", "", "games", "win", "draw", "loss", "score");
        row(&mut s, "A white", &self.a_as_white);
        row(&mut s, "A black", &self.a_as_black);
        row(&mut s, "total", &self.total);
        let _ = writeln!(
            s,
            "A score {:.3}, 95% interval [{:.3}, {:.3}], mean length {:.1} plies",
            self.score, self.wilson_low, self.wilson_high, self.mean_plies
        );
        s
    }
}

/// Wilson score interval at 95% for a proportion `p` over `n` trials.
pub fn wilson_interval(p: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Rating difference implied by a score: `400 log10(w / (1 - w))`.
pub fn relative_elo(w: f64) -> Result<f64, ArenaError> {
    if !(w > 0.0 && w < 1.0) {
        return Err(ArenaError::WinRate(w));
    }
    Ok(400.0 * (w / (1.0 - w)).log10())
}

/// Seed of game `index` in a series started from `seed`.
pub fn game_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plays `n` games with A as white in even-numbered games. Calls
/// `on_game` with every finished record.
pub fn play_series(
    a: &mut dyn Player,
    b: &mut dyn Player,
    n: usize,
    seed: u64,
    mut on_game: impl FnMut(usize, &GameRecord),
) -> Result<MatchResult, ArenaError> {
    let (a_name, b_name) = (a.name(), b.name());
    let mut result = MatchResult {
        a: a_name,
        b: b_name,
        games: n,
        seed,
        total: Tally::default(),
        a_as_white: Tally::default(),
        a_as_black: Tally::default(),
        score: 0.0,
        wilson_low: 0.0,
        wilson_high: 1.0,
        mean_plies: 0.0,
    };
    let mut plies = 0usize;
    for i in 0..n {
        let setup = GameSetup::new(format!("{seed}-{i}"), game_seed(seed, i));
        let a_white = i % 2 == 0;
        let record = if a_white {
            play_game(&mut *a, &mut *b, &setup)?
        } else {
            play_game(&mut *b, &mut *a, &setup)?
        };
        let a_color = if a_white { Color::White } else { Color::Black };
        result.total.add(record.result, a_color);
        if a_white {
            result.a_as_white.add(record.result, a_color);
        } else {
            result.a_as_black.add(record.result, a_color);
        }
        plies += record.plies();
        on_game(i, &record);
    }
    result.score = result.total.score();
    (result.wilson_low, result.wilson_high) = wilson_interval(result.score, n);
    result.mean_plies = plies as f64 / n.max(1) as f64;
    Ok(result)
}

/// A color-balanced match: `n` must be even and nonzero.
pub fn run_match(a: &mut dyn Player, b: &mut dyn Player, n: usize, seed: u64) -> Result<MatchResult, ArenaError> {
    if n == 0 || n % 2 != 0 {
        return Err(ArenaError::GameCount(n));
    }
    play_series(a, b, n, seed, |_, _| {})
}

pub fn run_spec_match(a: &BotSpec, b: &BotSpec, n: usize, seed: u64) -> Result<MatchResult, ArenaError> {
    let mut pa = a.build()?;
    let mut pb = b.build()?;
    run_match(&mut pa, &mut pb, n, seed)
}
