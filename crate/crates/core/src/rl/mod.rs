//! Self-play stage: episodes against opponents drawn from a pool of frozen
//! snapshots, terminal rewards, advantage estimation and clipped-surrogate
//! updates of both policy heads and the value head.

mod pool;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use pool::{opponent_probabilities, OpponentPool, PoolError, ResultWindow, WARMUP_GAMES};

use crate::arena::{play_series, ArenaError, Decision, Head, MatchResult, NetMode, NetPlayer};
use crate::encoding::PlaneStack;
use crate::engine::Color;
use crate::game::{play_game, GameSetup};
use crate::neural::{
    log_softmax, AdamConfig, Checkpoint, CheckpointMeta, NeuralError, OptimizerState, OutputGrad,
    PolicyValueNet, Weights,
};
use crate::record::GameRecord;

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error("no trajectory steps to train on")]
    EmptyBatch,
    #[error("evaluation needs at least one game")]
    NoGames,
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

impl From<crate::engine::EngineError> for RlError {
    fn from(e: crate::engine::EngineError) -> Self {
        RlError::Arena(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub adam: AdamConfig,
    pub games_per_iteration: usize,
    /// Trainer win rate over its recent pool games that freezes a snapshot.
    pub snapshot_threshold: f64,
    /// Results remembered per snapshot and for the trainer's window.
    pub window: usize,
    /// Pool games required in the trainer's window before a snapshot.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.997,
            lambda: 0.95,
            update_epochs: 4,
            minibatch_size: 256,
            value_coef: 0.5,
            entropy_coef: 0.01,
            adam: AdamConfig {
                lr: 3e-4,
                ..AdamConfig::default()
            },
            games_per_iteration: 16,
            snapshot_threshold: 0.65,
            window: 500,
            warmup: WARMUP_GAMES,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.update_epochs == 0 || self.minibatch_size == 0 || self.games_per_iteration == 0 {
            return bad("update_epochs, minibatch_size and games_per_iteration must be positive");
        }
        if !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return bad("loss coefficients must be nonnegative");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.snapshot_threshold) {
            return bad("snapshot_threshold must lie in [0, 1]");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub input: PlaneStack,
    pub head: Head,
    pub action: usize,
    /// Log-probability under the policy that acted.
    pub logprob: f64,
    pub value_pred: f64,
    pub reward: f64,
    pub advantage: f64,
    pub return_: f64,
}

impl From<Decision> for TrajectoryStep {
    fn from(d: Decision) -> Self {
        Self {
            input: d.input,
            head: d.head,
            action: d.action,
            logprob: d.logprob,
            value_pred: d.value as f64,
            reward: 0.0,
            advantage: 0.0,
            return_: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Episode {
    /// The trainer's decisions in order: sense, move, sense, move, ...
    pub steps: Vec<TrajectoryStep>,
    pub trainer_color: Color,
    /// Trainer's score: 1 win, 0.5 draw, 0 loss.
    pub score: f64,
    pub record: GameRecord,
}

/// One game: the trainer samples both heads at temperature 1, the opponent
/// plays argmax. Trajectories come from the trainer's own decision trace.
pub fn play_episode(
    trainer: &Arc<PolicyValueNet<f32>>,
    opponent: &Arc<PolicyValueNet<f32>>,
    trainer_color: Color,
    setup: &GameSetup,
) -> Result<Episode, RlError> {
    let mut me = NetPlayer::new(trainer.clone(), "trainer", NetMode::Sample { temperature: 1.0 }).with_trace();
    let mut opp = NetPlayer::new(opponent.clone(), "opponent", NetMode::Argmax);
    let record = match trainer_color {
        Color::White => play_game(&mut me, &mut opp, setup)?,
        Color::Black => play_game(&mut opp, &mut me, setup)?,
    };
    let score = (record.result.value_for(trainer_color) as f64 + 1.0) / 2.0;
    Ok(Episode {
        steps: me.take_trace().into_iter().map(TrajectoryStep::from).collect(),
        trainer_color,
        score,
        record,
    })
}

/// Terminal reward: the final move and the sense just before it get +1 for
/// a win and -1 for a loss; draws and all other steps get 0.
pub fn assign_rewards(steps: &mut [TrajectoryStep], score: f64) {
    for s in steps.iter_mut() {
        s.reward = 0.0;
    }
    let r = if score > 0.5 { 1.0 } else if score < 0.5 { -1.0 } else { 0.0 };
    if r == 0.0 {
        return;
    }
    let n = steps.len();
    for s in &mut steps[n.saturating_sub(2)..] {
        s.reward = r;
    }
}

/// Generalized advantage estimation over one episode, sense and move steps
/// as consecutive decisions; the episode ends after the last step.
/// Fills raw advantages and `return_ = advantage + value_pred`.
pub fn compute_gae(steps: &mut [TrajectoryStep], gamma: f64, lambda: f64) {
    let mut next_value = 0.0;
    let mut running = 0.0;
    for s in steps.iter_mut().rev() {
        let delta = s.reward + gamma * next_value - s.value_pred;
        running = delta + gamma * lambda * running;
        s.advantage = running;
        s.return_ = running + s.value_pred;
        next_value = s.value_pred;
    }
}

/// Rescales advantages to zero mean and unit variance. A batch with
/// (near) zero spread is only centered.
pub fn normalize_advantages(steps: &mut [TrajectoryStep]) {
    if steps.is_empty() {
        return;
    }
    let n = steps.len() as f64;
    let mean = steps.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = steps.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for s in steps.iter_mut() {
        s.advantage -= mean;
        if sd > 1e-8 {
            s.advantage /= sd;
        }
    }
}

/// Loss terms of one step, already divided by its head's step count (and
/// the batch size for the value term).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub ratio: f64,
    pub clipped: bool,
}

/// Per-step PPO objective and its gradient with respect to the head's
/// logits and the value output:
/// `(-min(r A, clip(r) A) - c_e H) / n_head + c_v (V - R)^2 / n_total`.
pub fn surrogate(
    logits: &[f64],
    value: f64,
    step: &TrajectoryStep,
    config: &PpoConfig,
    n_head: usize,
    n_total: usize,
) -> (StepLoss, Vec<f64>, f64) {
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let ratio = (logp[step.action] - step.logprob).exp();
    let a = step.advantage;
    let clipped_ratio = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
    let (unclipped, clipped) = (ratio * a, clipped_ratio * a);
    // The clipped branch is flat in the logits, so it passes no gradient.
    let use_clip = clipped < unclipped;
    let policy = -unclipped.min(clipped);
    let entropy: f64 = -p.iter().zip(&logp).map(|(pi, li)| if *pi > 0.0 { pi * li } else { 0.0 }).sum::<f64>();
    let (kh, kt) = (1.0 / n_head as f64, 1.0 / n_total as f64);

    let mut grad = vec![0.0; logits.len()];
    if !use_clip {
        // d(-r A)/dz_j = -A r (1[j = a] - p_j)
        for (g, pi) in grad.iter_mut().zip(&p) {
            *g += a * ratio * pi;
        }
        grad[step.action] -= a * ratio;
    }
    // d(-c_e H)/dz_j = c_e p_j (log p_j + H)
    for ((g, pi), li) in grad.iter_mut().zip(&p).zip(&logp) {
        let term = if *pi > 0.0 { pi * (li + entropy) } else { 0.0 };
        *g = (*g + config.entropy_coef * term) * kh;
    }
    let diff = value - step.return_;
    let loss = StepLoss {
        policy: policy * kh,
        value: config.value_coef * diff * diff * kt,
        entropy: entropy * kh,
        ratio,
        clipped: use_clip,
    };
    (loss, grad, 2.0 * config.value_coef * diff * kt)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub steps: usize,
    pub minibatches: usize,
    /// Means over minibatches of the summed per-head surrogate losses.
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean entropy per head, summed over the two heads.
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Sums over one minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinibatchLoss {
    pub steps: usize,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub ratio_sum: f64,
    pub clipped: usize,
}

/// One optimizer step on a minibatch. Sense and move steps are averaged
/// separately and the two policy losses summed.
pub fn ppo_minibatch(
    net: &mut PolicyValueNet<f32>,
    opt: &mut OptimizerState<f32>,
    grads: &mut Weights<f32>,
    steps: &[&TrajectoryStep],
    config: &PpoConfig,
) -> Result<MinibatchLoss, RlError> {
    grads.fill_zero();
    let n_sense = steps.iter().filter(|s| s.head == Head::Sense).count();
    let n_move = steps.len() - n_sense;
    let mut total = MinibatchLoss {
        steps: steps.len(),
        ..MinibatchLoss::default()
    };
    for s in steps {
        let n_head = if s.head == Head::Sense { n_sense } else { n_move };
        let (out, cache) = net.forward_one(&s.input, s.head.heads());
        let value = out.value as f64;
        let logits: Vec<f64> = s.head.logits(out).into_iter().map(f64::from).collect();
        let (l, g, gv) = surrogate(&logits, value, s, config, n_head, steps.len());
        total.policy += l.policy;
        total.value += l.value;
        total.entropy += l.entropy;
        total.ratio_sum += l.ratio;
        total.clipped += l.clipped as usize;
        let g: Vec<f32> = g.into_iter().map(|x| x as f32).collect();
        let grad = OutputGrad {
            sense: (s.head == Head::Sense).then(|| g.clone()),
            moves: (s.head == Head::Move).then_some(g),
            value: gv as f32,
        };
        net.backward(&s.input, &cache, &grad, grads);
    }
    if !(total.policy.is_finite() && total.value.is_finite()) {
        return Err(NeuralError::NonFinite.into());
    }
    opt.step(&mut net.weights, grads)?;
    Ok(total)
}

/// Clipped-surrogate epochs over `steps` (advantages already set).
pub fn ppo_update(
    net: &mut PolicyValueNet<f32>,
    opt: &mut OptimizerState<f32>,
    steps: &[TrajectoryStep],
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats, RlError> {
    config.validate()?;
    if steps.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let mut grads = Weights::zeros(&net.config);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    let mut stats = PpoStats {
        steps: steps.len(),
        ..PpoStats::default()
    };
    let (mut seen, mut clipped) = (0usize, 0usize);
    for _ in 0..config.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let batch: Vec<&TrajectoryStep> = chunk.iter().map(|&i| &steps[i]).collect();
            let l = ppo_minibatch(net, opt, &mut grads, &batch, config)?;
            stats.minibatches += 1;
            stats.policy_loss += l.policy;
            stats.value_loss += l.value;
            stats.entropy += l.entropy;
            stats.mean_ratio += l.ratio_sum;
            seen += l.steps;
            clipped += l.clipped;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.mean_ratio /= seen as f64;
    stats.clip_fraction = clipped as f64 / seen as f64;
    Ok(stats)
}

/// Head-to-head between two networks with alternating colors. `n >= 1`.
pub fn eval_nets(
    a: &Arc<PolicyValueNet<f32>>,
    a_mode: NetMode,
    b: &Arc<PolicyValueNet<f32>>,
    b_mode: NetMode,
    n: usize,
    seed: u64,
) -> Result<MatchResult, RlError> {
    if n == 0 {
        return Err(RlError::NoGames);
    }
    let mut pa = NetPlayer::new(a.clone(), "a", a_mode);
    let mut pb = NetPlayer::new(b.clone(), "b", b_mode);
    Ok(play_series(&mut pa, &mut pb, n, seed, |_, _| {})?)
}

/// Score of A (wins plus half draws over `n`) with argmax play on both
/// sides.
pub fn eval_matchup(a: &Arc<PolicyValueNet<f32>>, b: &Arc<PolicyValueNet<f32>>, n: usize, seed: u64) -> Result<f64, RlError> {
    Ok(eval_nets(a, NetMode::Argmax, b, NetMode::Argmax, n, seed)?.score)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub games_played: u64,
    /// Trainer score over this iteration's games.
    pub score: f64,
    /// Trainer's recent score against each pool snapshot.
    pub win_rates: BTreeMap<String, f64>,
    /// Trainer's aggregate over its window of recent pool games.
    pub window_score: Option<f64>,
    pub ppo: PpoStats,
    pub new_snapshot: Option<String>,
    pub pool_size: usize,
    pub mean_plies: f64,
}

/// The learner: current weights, optimizer, opponent pool and the frozen
/// snapshot weights.
pub struct RlTrainer {
    pub config: PpoConfig,
    net: PolicyValueNet<f32>,
    opt: OptimizerState<f32>,
    pool: OpponentPool,
    snapshots: BTreeMap<String, Arc<PolicyValueNet<f32>>>,
    window: ResultWindow,
    rng: ChaCha8Rng,
    iteration: u64,
    games_played: u64,
}

impl RlTrainer {
    /// Seeds the pool with `initial` (the supervised network), which also
    /// provides the starting actor and critic.
    pub fn new(initial: PolicyValueNet<f32>, config: PpoConfig) -> Result<Self, RlError> {
        config.validate()?;
        let mut pool = OpponentPool::new(config.window);
        let id = "snapshot-000".to_string();
        pool.add(id.clone())?;
        let mut snapshots = BTreeMap::new();
        snapshots.insert(id, Arc::new(initial.clone()));
        Ok(Self {
            opt: OptimizerState::new(&initial.config, config.adam),
            net: initial,
            pool,
            snapshots,
            window: ResultWindow::new(config.window),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            iteration: 0,
            games_played: 0,
            config,
        })
    }

    pub fn net(&self) -> &PolicyValueNet<f32> {
        &self.net
    }

    pub fn pool(&self) -> &OpponentPool {
        &self.pool
    }

    pub fn snapshot(&self, id: &str) -> Option<&Arc<PolicyValueNet<f32>>> {
        self.snapshots.get(id)
    }

    pub fn games_played(&self) -> u64 {
        self.games_played
    }

    pub fn checkpoint(&self, note: &str) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            optimizer: Some(self.opt.clone()),
            meta: CheckpointMeta {
                games_played: self.games_played,
                snapshot_id: None,
                note: note.to_string(),
            },
        }
    }

    /// Collects `games_per_iteration` episodes, updates the network once
    /// and applies the snapshot rule. `on_episode` sees every finished game.
    pub fn run_iteration(&mut self, mut on_episode: impl FnMut(&Episode)) -> Result<IterationStats, RlError> {
        let current = Arc::new(self.net.clone());
        let mut batch = Vec::new();
        let (mut score, mut plies) = (0.0, 0usize);
        for _ in 0..self.config.games_per_iteration {
            let id = self.pool.sample(&mut self.rng)?.to_string();
            let opponent = self.snapshots[&id].clone();
            let color = if self.games_played % 2 == 0 { Color::White } else { Color::Black };
            let setup = GameSetup::new(format!("rl-{}-{}", self.config.seed, self.games_played), self.rng.random());
            let mut ep = play_episode(&current, &opponent, color, &setup)?;
            self.games_played += 1;
            self.pool.record_result(&id, ep.score)?;
            self.window.push(ep.score);
            score += ep.score;
            plies += ep.record.plies();
            assign_rewards(&mut ep.steps, ep.score);
            compute_gae(&mut ep.steps, self.config.gamma, self.config.lambda);
            on_episode(&ep);
            batch.append(&mut ep.steps);
        }
        normalize_advantages(&mut batch);
        let ppo = ppo_update(&mut self.net, &mut self.opt, &batch, &self.config, &mut self.rng)?;
        self.iteration += 1;
        let window_score = self.window.mean();
        let new_snapshot = self.maybe_snapshot()?;
        let games = self.config.games_per_iteration as f64;
        Ok(IterationStats {
            iteration: self.iteration,
            games_played: self.games_played,
            score: score / games,
            win_rates: self.pool.ids().map(|id| (id.to_string(), self.pool.win_rate(id).unwrap_or(0.5))).collect(),
            window_score,
            ppo,
            new_snapshot,
            pool_size: self.pool.len(),
            mean_plies: plies as f64 / games,
        })
    }

    fn maybe_snapshot(&mut self) -> Result<Option<String>, RlError> {
        if !pool::snapshot_due(&self.window, self.config.snapshot_threshold, self.config.warmup) {
            return Ok(None);
        }
        let id = format!("snapshot-{:03}", self.pool.len());
        self.pool.add(id.clone())?;
        self.snapshots.insert(id.clone(), Arc::new(self.net.clone()));
        self.window.clear();
        Ok(Some(id))
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (&str, &Arc<PolicyValueNet<f32>>)> {
        self.snapshots.iter().map(|(k, v)| (k.as_str(), v))
    }
}
