//! Supervised stage: examples from game records, training on the summed
//! losses of both policy heads and the value head, exact-match evaluation.
//!
//! Examples are built from one side's stream of a record at a time, so an
//! example can only contain what that player observed.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::{game_seed, ArenaError, BotSpec, Head};
use crate::encoding::{
    encode_frame, encode_move_index, EncodeError, FramePlanes, ObservationHistory, PlaneStack,
    SenseIndex, Stage,
};
use crate::engine::{Color, Move};
use crate::game::{play_game, GameSetup};
use crate::neural::{
    argmax_action, cross_entropy, value_loss, AdamConfig, NeuralError, OptimizerState, OutputGrad,
    PolicyValueNet, Weights,
};
use crate::record::{to_json_line, GameRecord};

#[derive(Debug, thiserror::Error)]
pub enum SlError {
    #[error("no examples to {0}")]
    Empty(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("record {game} is out of turn order: {source}")]
    Encode {
        game: String,
        #[source]
        source: EncodeError,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which move a move example is trained to predict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveTarget {
    /// The move the player asked for.
    #[default]
    Requested,
    /// The move the referee executed; pass when the request was illegal.
    Taken,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub input: PlaneStack,
    pub kind: Head,
    pub target: usize,
    /// Game result from the acting player's side: +1, 0 or -1.
    pub value_target: f32,
}

#[derive(Clone, Copy, Debug)]
struct Item {
    /// Completed frames of this example's stream: `frames[past_start..past_end]`.
    past_start: u32,
    past_end: u32,
    current: u32,
    kind: Head,
    target: u16,
    value: i8,
}

/// Examples kept as shared encoded frames; each 1800-channel stack is
/// rebuilt on demand.
#[derive(Clone, Debug, Default)]
pub struct ExampleSet {
    frames: Vec<FramePlanes>,
    items: Vec<Item>,
    skipped: usize,
}

impl ExampleSet {
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a GameRecord>,
        target: MoveTarget,
    ) -> Result<Self, SlError> {
        let mut set = Self::default();
        for rec in records {
            for color in [Color::White, Color::Black] {
                set.push_side(rec, color, target).map_err(|source| SlError::Encode {
                    game: rec.id.clone(),
                    source,
                })?;
            }
        }
        Ok(set)
    }

    /// Two examples per turn: the pre-sense stack with the sense taken and
    /// the pre-move stack with the move. Reads only `color`'s stream and
    /// the final result.
    fn push_side(&mut self, rec: &GameRecord, color: Color, target: MoveTarget) -> Result<(), EncodeError> {
        let value = rec.result.value_for(color) as i8;
        let past_start = self.frames.len() as u32;
        let mut partial = Vec::new();
        let mut pending = Vec::new();
        let mut history = ObservationHistory::new(color);
        for (turn, entry) in rec.side(color).turns.iter().enumerate() {
            let past_end = past_start + turn as u32;
            history.start_turn(entry.opp_capture)?;
            partial.push(encode_frame(&history.partial(Stage::PreSense)?));
            let sense = SenseIndex::new(entry.sense.center().index()).expect("64 squares");
            pending.push((past_end, partial.len() - 1, Head::Sense, sense.get()));
            history.record_sense(entry.sense, &entry.sense_outcome())?;
            partial.push(encode_frame(&history.partial(Stage::PreMove)?));
            let mv = match target {
                MoveTarget::Requested => Some(entry.requested_move),
                MoveTarget::Taken => Some(entry.taken_move.unwrap_or(Move::Pass)),
            };
            match mv.map(encode_move_index) {
                Some(Ok(i)) => pending.push((past_end, partial.len() - 1, Head::Move, i.get())),
                _ => self.skipped += 1,
            }
            history.record_move(&entry.move_outcome())?;
            self.frames.push(encode_frame(history.last_completed().expect("just completed")));
        }
        let partial_start = self.frames.len() as u32;
        self.frames.extend(partial);
        for (past_end, current, kind, target) in pending {
            self.items.push(Item {
                past_start,
                past_end,
                current: partial_start + current as u32,
                kind,
                target: target as u16,
                value,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Move requests that had no index and produced no example.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn kind(&self, i: usize) -> Head {
        self.items[i].kind
    }

    pub fn target(&self, i: usize) -> usize {
        self.items[i].target as usize
    }

    pub fn value_target(&self, i: usize) -> f32 {
        self.items[i].value as f32
    }

    pub fn input(&self, i: usize) -> PlaneStack {
        let it = &self.items[i];
        PlaneStack::from_encoded(
            &self.frames[it.past_start as usize..it.past_end as usize],
            &self.frames[it.current as usize],
        )
    }

    pub fn get(&self, i: usize) -> TrainExample {
        TrainExample {
            input: self.input(i),
            kind: self.kind(i),
            target: self.target(i),
            value_target: self.value_target(i),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TrainExample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// The most frequent move target and how often it occurs.
    pub fn majority_move(&self) -> Option<(usize, usize)> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for it in self.items.iter().filter(|it| it.kind == Head::Move) {
            *counts.entry(it.target as usize).or_default() += 1;
        }
        // Ties to the lowest index, like argmax.
        counts.into_iter().max_by_key(|&(idx, n)| (n, std::cmp::Reverse(idx)))
    }

    /// Fraction of move examples whose target is `index`.
    pub fn move_target_rate(&self, index: usize) -> f64 {
        let moves = self.items.iter().filter(|it| it.kind == Head::Move);
        let (hit, n) = moves.fold((0usize, 0usize), |(h, n), it| (h + (it.target as usize == index) as usize, n + 1));
        if n == 0 { 0.0 } else { hit as f64 / n as f64 }
    }
}

/// All examples of one record, built from each side's own stream.
pub fn make_examples(rec: &GameRecord, target: MoveTarget) -> Result<Vec<TrainExample>, SlError> {
    Ok(ExampleSet::from_records([rec], target)?.iter().collect())
}

/// Splits by game: a game's examples never straddle the two sets.
/// Deterministic per seed.
pub fn split(records: &[GameRecord], fraction: f64, seed: u64) -> Result<(Vec<GameRecord>, Vec<GameRecord>), SlError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SlError::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (records.len() as f64 * fraction).round() as usize;
    let train_ids: BTreeSet<usize> = order[..n_train].iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, rec) in records.iter().enumerate() {
        if train_ids.contains(&i) {
            train.push(rec.clone());
        } else {
            test.push(rec.clone());
        }
    }
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Shuffling seed.
    pub seed: u64,
    pub train_fraction: f64,
    pub move_target: MoveTarget,
    /// Stop once the test loss has risen this many epochs in a row.
    pub patience: usize,
    pub value_weight: f64,
}

impl Default for SlConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            train_fraction: 0.9,
            move_target: MoveTarget::Requested,
            patience: 2,
            value_weight: 1.0,
        }
    }
}

impl SlConfig {
    pub fn validate(&self) -> Result<(), SlError> {
        let bad = |m: &str| Err(SlError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.value_weight >= 0.0 && self.value_weight.is_finite()) {
            return bad("value_weight must be nonnegative");
        }
        Ok(())
    }
}

/// Exact-match accuracies and mean losses over one example set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub examples: usize,
    pub sense_examples: usize,
    pub move_examples: usize,
    pub sense_accuracy: f64,
    pub move_accuracy: f64,
    pub sense_loss: f64,
    pub move_loss: f64,
    pub value_loss: f64,
}

impl EvalMetrics {
    /// Summed objective: both cross-entropies plus the value error.
    pub fn total_loss(&self) -> f64 {
        self.sense_loss + self.move_loss + self.value_loss
    }
}

#[derive(Default)]
struct Accumulator {
    n: [usize; 2],
    hits: [usize; 2],
    ce: [f64; 2],
    value: f64,
}

impl Accumulator {
    fn add(&mut self, kind: Head, hit: bool, ce: f64, value: f64) {
        let k = kind as usize;
        self.n[k] += 1;
        self.hits[k] += hit as usize;
        self.ce[k] += ce;
        self.value += value;
    }

    fn finish(&self) -> EvalMetrics {
        let div = |a: f64, n: usize| if n == 0 { 0.0 } else { a / n as f64 };
        let total = self.n[0] + self.n[1];
        EvalMetrics {
            examples: total,
            sense_examples: self.n[0],
            move_examples: self.n[1],
            sense_accuracy: div(self.hits[0] as f64, self.n[0]),
            move_accuracy: div(self.hits[1] as f64, self.n[1]),
            sense_loss: div(self.ce[0], self.n[0]),
            move_loss: div(self.ce[1], self.n[1]),
            value_loss: div(self.value, total),
        }
    }
}

/// Argmax exact-match accuracy per head; no partial credit.
pub fn evaluate(net: &PolicyValueNet<f32>, set: &ExampleSet) -> Result<EvalMetrics, SlError> {
    if set.is_empty() {
        return Err(SlError::Empty("evaluate"));
    }
    let mut acc = Accumulator::default();
    for i in 0..set.len() {
        let kind = set.kind(i);
        let input = set.input(i);
        let (out, _) = net.forward_one(&input, kind.heads());
        let value = out.value;
        let logits = kind.logits(out);
        let (ce, _) = cross_entropy(&logits, set.target(i));
        let (vl, _) = value_loss(value, set.value_target(i));
        acc.add(kind, argmax_action(&logits) == set.target(i), ce as f64, vl as f64);
    }
    Ok(acc.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Running averages over the epoch's batches.
    pub train: EvalMetrics,
    pub test: Option<EvalMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Test metrics of the untrained network.
    pub initial: Option<EvalMetrics>,
    pub epochs: Vec<EpochMetrics>,
    pub stopped_early: bool,
}

impl Metrics {
    pub fn last_test(&self) -> Option<&EvalMetrics> {
        self.epochs.last().and_then(|e| e.test.as_ref())
    }
}

/// One optimizer step over `batch`. Returns the batch's metrics.
pub fn train_batch(
    net: &mut PolicyValueNet<f32>,
    opt: &mut OptimizerState<f32>,
    grads: &mut Weights<f32>,
    set: &ExampleSet,
    batch: &[usize],
    value_weight: f64,
) -> Result<EvalMetrics, SlError> {
    grads.fill_zero();
    let mut acc = Accumulator::default();
    for &i in batch {
        let kind = set.kind(i);
        let input = set.input(i);
        let (out, cache) = net.forward_one(&input, kind.heads());
        let value = out.value;
        let logits = kind.logits(out);
        let (ce, g) = cross_entropy(&logits, set.target(i));
        let (vl, gv) = value_loss(value, set.value_target(i));
        acc.add(kind, argmax_action(&logits) == set.target(i), ce as f64, vl as f64);
        let grad = OutputGrad {
            sense: (kind == Head::Sense).then(|| g.clone()),
            moves: (kind == Head::Move).then_some(g),
            value: gv * value_weight as f32,
        };
        net.backward(&input, &cache, &grad, grads);
    }
    grads.scale(1.0 / batch.len() as f32);
    opt.step(&mut net.weights, grads)?;
    Ok(acc.finish())
}

/// Trains in place with per-epoch shuffling. `test` metrics are recorded
/// before training and after every epoch; training stops early once they
/// worsen `patience` epochs in a row.
pub fn train(
    net: &mut PolicyValueNet<f32>,
    train_set: &ExampleSet,
    test_set: Option<&ExampleSet>,
    config: &SlConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Metrics, SlError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(SlError::Empty("train on"));
    }
    let test_set = test_set.filter(|t| !t.is_empty());
    let mut opt = OptimizerState::new(&net.config, config.adam);
    let mut grads = Weights::zeros(&net.config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = test_set.map(|t| evaluate(net, t)).transpose()?;
    let mut metrics = Metrics {
        initial,
        epochs: Vec::new(),
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut prev_loss = initial.map(|m| m.total_loss());
    let mut rises = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut acc = Accumulator::default();
        for batch in order.chunks(config.batch_size) {
            let m = train_batch(net, &mut opt, &mut grads, train_set, batch, config.value_weight)?;
            acc.n[0] += m.sense_examples;
            acc.n[1] += m.move_examples;
            acc.hits[0] += (m.sense_accuracy * m.sense_examples as f64).round() as usize;
            acc.hits[1] += (m.move_accuracy * m.move_examples as f64).round() as usize;
            acc.ce[0] += m.sense_loss * m.sense_examples as f64;
            acc.ce[1] += m.move_loss * m.move_examples as f64;
            acc.value += m.value_loss * m.examples as f64;
        }
        if !net.weights.is_finite() {
            return Err(NeuralError::NonFinite.into());
        }
        let test = test_set.map(|t| evaluate(net, t)).transpose()?;
        let record = EpochMetrics {
            epoch,
            train: acc.finish(),
            test,
        };
        on_epoch(&record);
        metrics.epochs.push(record);
        if let Some(t) = test {
            let loss = t.total_loss();
            rises = if prev_loss.is_some_and(|p| loss > p) { rises + 1 } else { 0 };
            prev_loss = Some(loss);
            if config.patience > 0 && rises >= config.patience {
                metrics.stopped_early = true;
                break;
            }
        }
    }
    Ok(metrics)
}

/// Synthetic game generation between scripted bots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Each game draws white and black independently from this list.
    pub bots: Vec<BotSpec>,
    pub games: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            bots: vec![BotSpec::greedy().with_bias(1.0), BotSpec::random().with_bias(1.0)],
            games: 2000,
            seed: 0,
        }
    }
}

/// Plays the configured games and hands each record to `sink` in order.
pub fn gen_synthetic_with(config: &SyntheticConfig, mut sink: impl FnMut(GameRecord) -> Result<(), SlError>) -> Result<(), SlError> {
    if config.bots.is_empty() {
        return Err(SlError::Config("at least one bot is required".into()));
    }
    let mut players = config.bots.iter().map(|b| b.build()).collect::<Result<Vec<_>, _>>()?;
    let k = players.len();
    for i in 0..config.games {
        let seed = game_seed(config.seed, i);
        let (w, b) = ((seed % k as u64) as usize, ((seed >> 32) % k as u64) as usize);
        let setup = GameSetup::new(format!("syn-{}-{i}", config.seed), seed);
        let rec = if w == b {
            // Same spec on both seats: a second instance keeps the seats
            // independent.
            let mut other = config.bots[b].build()?;
            play_game(&mut players[w], &mut other, &setup)
        } else {
            let (lo, hi) = players.split_at_mut(w.max(b));
            let (pw, pb) = if w < b { (&mut lo[w], &mut hi[0]) } else { (&mut hi[0], &mut lo[b]) };
            play_game(pw, pb, &setup)
        }
        .map_err(ArenaError::from)?;
        sink(rec)?;
    }
    Ok(())
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Vec<GameRecord>, SlError> {
    let mut out = Vec::with_capacity(config.games);
    gen_synthetic_with(config, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Writes the games as JSON Lines; returns the number written.
pub fn gen_synthetic_file(config: &SyntheticConfig, path: impl AsRef<Path>) -> Result<usize, SlError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    gen_synthetic_with(config, |r| {
        writeln!(w, "{}", to_json_line(&r))?;
        n += 1;
        Ok(())
    })?;
    w.flush()?;
    Ok(n)
}
