use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{
    decode_move_index, encode_move_index, MoveIndex, ObservationHistory, PlaneStack, SenseIndex,
    Stage, MOVE_ACTIONS, SENSE_ACTIONS,
};
use crate::engine::{
    Color, GameResult, Move, MoveOutcome, PieceKind, SenseAction, SenseOutcome, Square, SquareSet,
};
use crate::game::Player;
use crate::neural::{argmax_action, log_prob, sample_action, Heads, NetOutput, PolicyValueNet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NetMode {
    Argmax,
    Sample { temperature: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Sense,
    Move,
}

impl Head {
    pub fn heads(self) -> Heads {
        match self {
            Head::Sense => Heads::SENSE,
            Head::Move => Heads::MOVE,
        }
    }

    pub fn logits<T>(self, out: NetOutput<T>) -> Vec<T> {
        match self {
            Head::Sense => out.sense_logits,
            Head::Move => out.move_logits,
        }
    }

    pub fn actions(self) -> usize {
        match self {
            Head::Sense => SENSE_ACTIONS,
            Head::Move => MOVE_ACTIONS,
        }
    }
}

/// One network decision, kept for policy-gradient training.
#[derive(Clone, Debug)]
pub struct Decision {
    pub input: PlaneStack,
    pub head: Head,
    pub action: usize,
    /// Log-probability of `action` under the policy that chose it.
    pub logprob: f64,
    pub value: f32,
}

/// A player driven by a policy-value network over its own observation
/// history.
#[derive(Clone, Debug)]
pub struct NetPlayer {
    net: Arc<PolicyValueNet<f32>>,
    name: String,
    mode: NetMode,
    legal_mask: bool,
    rng: ChaCha8Rng,
    history: ObservationHistory,
    trace: Option<Vec<Decision>>,
    last_value: f32,
}

impl NetPlayer {
    pub fn new(net: Arc<PolicyValueNet<f32>>, name: impl Into<String>, mode: NetMode) -> Self {
        Self {
            net,
            name: name.into(),
            mode,
            legal_mask: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            history: ObservationHistory::new(Color::White),
            trace: None,
            last_value: 0.0,
        }
    }

    /// Restricts move choices to moves the player can verify as legal
    /// from its own pieces (plus pass). Off by default.
    pub fn with_legal_mask(mut self, on: bool) -> Self {
        self.legal_mask = on;
        self
    }

    /// Records every decision of the following games.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn take_trace(&mut self) -> Vec<Decision> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn net(&self) -> &Arc<PolicyValueNet<f32>> {
        &self.net
    }

    /// The value head's estimate at the latest decision.
    pub fn last_value(&self) -> f32 {
        self.last_value
    }

    fn pick(&mut self, logits: &[f32]) -> usize {
        match self.mode {
            NetMode::Argmax => argmax_action(logits),
            NetMode::Sample { temperature } => {
                sample_action(logits, temperature, &mut self.rng).expect("valid temperature and finite logits")
            }
        }
    }

    fn decide(&mut self, stage: Stage) -> usize {
        let input = self.history.encode(stage).expect("turn order");
        let head = match stage {
            Stage::PreSense => Head::Sense,
            Stage::PreMove => Head::Move,
        };
        let (out, _) = self.net.forward_one(&input, head.heads());
        let value = out.value;
        let mut logits = head.logits(out);
        if head == Head::Move && self.legal_mask {
            let mut allowed = vec![false; logits.len()];
            allowed[MoveIndex::PASS.get()] = true;
            let seen = self.history.current().sense_pieces.iter().fold(SquareSet::EMPTY, |a, &b| a | b);
            for m in self.history.own_board().candidate_moves(seen) {
                if let Ok(i) = encode_move_index(m) {
                    allowed[i.get()] = true;
                }
            }
            for (l, ok) in logits.iter_mut().zip(allowed) {
                if !ok {
                    *l = f32::NEG_INFINITY;
                }
            }
        }
        let action = self.pick(&logits);
        self.last_value = value;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(Decision {
                input,
                head,
                action,
                logprob: log_prob(&logits, action),
                value,
            });
        }
        action
    }
}

impl Player for NetPlayer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn handle_game_start(&mut self, color: Color, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.history = ObservationHistory::new(color);
        self.last_value = 0.0;
    }

    fn handle_opponent_move_result(&mut self, capture: Option<Square>) {
        self.history.start_turn(capture).expect("turn order");
    }

    fn choose_sense(&mut self) -> SenseAction {
        let i = self.decide(Stage::PreSense);
        SenseAction(SenseIndex::new(i).expect("64 sense logits").square())
    }

    fn handle_sense_result(&mut self, sense: SenseAction, outcome: &SenseOutcome) {
        self.history.record_sense(sense, outcome).expect("turn order");
    }

    fn choose_move(&mut self) -> Move {
        let i = self.decide(Stage::PreMove);
        let pawns = self.history.own_board().pieces()[PieceKind::Pawn.index()];
        let index = MoveIndex::new(i).expect("4673 move logits");
        // Indices that leave the board cannot be requested; they become a pass.
        decode_move_index(index, Some(pawns)).unwrap_or(Move::Pass)
    }

    fn handle_move_result(&mut self, _requested: Move, outcome: &MoveOutcome) {
        self.history.record_move(outcome).expect("turn order");
    }

    fn handle_game_end(&mut self, _result: GameResult) {}
}
