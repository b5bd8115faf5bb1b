use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{ObservationHistory, OwnBoard};
use crate::engine::{
    sense_window, Color, Move, MoveOutcome, PieceKind, SenseAction, SenseOutcome, Square,
    SquareSet,
};
use crate::game::Player;

/// Sense centers that never waste part of the window off the board.
pub fn inner_squares() -> Vec<Square> {
    Square::all().filter(|s| (1..=6).contains(&s.file()) && (1..=6).contains(&s.rank())).collect()
}

/// Ranks a square lies away from `color`'s back rank.
fn depth(color: Color, sq: Square) -> f64 {
    match color {
        Color::White => sq.rank() as f64,
        Color::Black => 7.0 - sq.rank() as f64,
    }
}

/// Preference used by biased bots: how far a move advances toward the
/// enemy, plus a small bonus for landing in the center.
pub fn move_preference(color: Color, mv: Move) -> f64 {
    let (Some(from), Some(to)) = (mv.from_square(), mv.to_square()) else {
        return 0.0;
    };
    let center = (2..=5).contains(&to.file()) && (2..=5).contains(&to.rank());
    depth(color, to) - depth(color, from) + if center { 0.5 } else { 0.0 }
}

/// Picks with probability proportional to `exp(bias * score)`; uniform
/// when `bias` is 0.
fn pick_weighted<T: Copy>(items: &[T], bias: f64, score: impl Fn(T) -> f64, rng: &mut ChaCha8Rng) -> T {
    if bias == 0.0 {
        return *items.choose(rng).expect("nonempty choice");
    }
    let scores: Vec<f64> = items.iter().map(|&m| bias * score(m)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dist = WeightedIndex::new(scores.iter().map(|s| (s - max).exp())).expect("finite weights");
    items[dist.sample(rng)]
}

fn random_sense(color: Color, bias: f64, rng: &mut ChaCha8Rng) -> SenseAction {
    let inner = inner_squares();
    SenseAction(pick_weighted(&inner, bias, |s| depth(color, s), rng))
}

fn random_move(own: &OwnBoard, known_enemy: SquareSet, bias: f64, rng: &mut ChaCha8Rng) -> Move {
    let moves = own.candidate_moves(known_enemy);
    if moves.is_empty() {
        // Only possible once the king is gone, which ends the game.
        return Move::Pass;
    }
    pick_weighted(&moves, bias, |m| move_preference(own.color(), m), rng)
}

/// Senses uniformly over the inner 6x6 and moves uniformly over its
/// own-side candidate moves. A positive `bias` tilts both choices toward
/// the enemy side.
#[derive(Clone, Debug)]
pub struct RandomBot {
    bias: f64,
    rng: ChaCha8Rng,
    history: ObservationHistory,
}

impl RandomBot {
    pub fn new(bias: f64) -> Self {
        Self {
            bias,
            rng: ChaCha8Rng::seed_from_u64(0),
            history: ObservationHistory::new(Color::White),
        }
    }
}

impl Player for RandomBot {
    fn name(&self) -> String {
        if self.bias == 0.0 {
            "random".into()
        } else {
            format!("random:bias={}", self.bias)
        }
    }

    fn handle_game_start(&mut self, color: Color, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.history = ObservationHistory::new(color);
    }

    fn handle_opponent_move_result(&mut self, capture: Option<Square>) {
        self.history.start_turn(capture).expect("turn order");
    }

    fn choose_sense(&mut self) -> SenseAction {
        random_sense(self.history.color(), self.bias, &mut self.rng)
    }

    fn handle_sense_result(&mut self, sense: SenseAction, outcome: &SenseOutcome) {
        self.history.record_sense(sense, outcome).expect("turn order");
    }

    fn choose_move(&mut self) -> Move {
        random_move(self.history.own_board(), SquareSet::EMPTY, self.bias, &mut self.rng)
    }

    fn handle_move_result(&mut self, _requested: Move, outcome: &MoveOutcome) {
        self.history.record_move(outcome).expect("turn order");
    }
}

/// What the greedy bot believes about one square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sighting {
    /// `None` when only a capture notice revealed an enemy piece there.
    pub kind: Option<PieceKind>,
    pub turn: u32,
}

fn target_value(kind: Option<PieceKind>) -> u32 {
    match kind {
        Some(PieceKind::Queen) => 9,
        Some(PieceKind::Rook) => 5,
        Some(PieceKind::Bishop | PieceKind::Knight) => 3,
        Some(PieceKind::Pawn) => 1,
        Some(PieceKind::King) => 100,
        None => 2,
    }
}

/// Remembers enemy pieces from its senses and capture notices, captures a
/// remembered king whenever it can, otherwise the most valuable remembered
/// piece, otherwise moves like [`RandomBot`]. Senses where its information
/// is stalest.
#[derive(Clone, Debug)]
pub struct GreedyBot {
    bias: f64,
    rng: ChaCha8Rng,
    history: ObservationHistory,
    memory: [Option<Sighting>; 64],
    last_seen: [u32; 64],
}

impl GreedyBot {
    pub fn new(bias: f64) -> Self {
        Self {
            bias,
            rng: ChaCha8Rng::seed_from_u64(0),
            history: ObservationHistory::new(Color::White),
            memory: [None; 64],
            last_seen: [0; 64],
        }
    }

    pub fn memory(&self, square: Square) -> Option<Sighting> {
        self.memory[square.index()]
    }

    fn known_enemy(&self) -> SquareSet {
        Square::all().filter(|s| self.memory[s.index()].is_some()).collect()
    }

    fn turn(&self) -> u32 {
        self.history.turns()
    }
}

impl Player for GreedyBot {
    fn name(&self) -> String {
        if self.bias == 0.0 {
            "greedy".into()
        } else {
            format!("greedy:bias={}", self.bias)
        }
    }

    fn handle_game_start(&mut self, color: Color, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.history = ObservationHistory::new(color);
        self.memory = [None; 64];
        self.last_seen = [0; 64];
    }

    fn handle_opponent_move_result(&mut self, capture: Option<Square>) {
        self.history.start_turn(capture).expect("turn order");
        if let Some(sq) = capture {
            self.memory[sq.index()] = Some(Sighting {
                kind: None,
                turn: self.turn(),
            });
        }
    }

    fn choose_sense(&mut self) -> SenseAction {
        let now = self.turn();
        let staleness = |c: Square| -> u32 {
            sense_window(c).iter().map(|s| now - self.last_seen[s.index()]).sum()
        };
        let inner = inner_squares();
        let best = inner.iter().map(|&c| staleness(c)).max().unwrap_or(0);
        let ties: Vec<Square> = inner.into_iter().filter(|&c| staleness(c) == best).collect();
        SenseAction(*ties.choose(&mut self.rng).expect("inner squares"))
    }

    fn handle_sense_result(&mut self, sense: SenseAction, outcome: &SenseOutcome) {
        self.history.record_sense(sense, outcome).expect("turn order");
        let (color, now) = (self.history.color(), self.turn());
        for (sq, piece) in &outcome.revealed {
            self.last_seen[sq.index()] = now;
            self.memory[sq.index()] = piece.filter(|p| p.color != color).map(|p| Sighting {
                kind: Some(p.kind),
                turn: now,
            });
        }
    }

    fn choose_move(&mut self) -> Move {
        let own = self.history.own_board();
        let known = self.known_enemy();
        let moves = own.candidate_moves(known);
        let captures: Vec<(Move, u32)> = moves
            .iter()
            .filter_map(|&m| {
                let to = m.to_square()?;
                let seen = self.memory[to.index()]?;
                // Capturing with an underpromotion is never better.
                if m.promotion().is_some_and(|k| k != PieceKind::Queen) {
                    return None;
                }
                Some((m, target_value(seen.kind)))
            })
            .collect();
        if let Some(best) = captures.iter().map(|c| c.1).max() {
            let top: Vec<Move> = captures.iter().filter(|c| c.1 == best).map(|c| c.0).collect();
            return *top.choose(&mut self.rng).expect("nonempty");
        }
        random_move(own, known, self.bias, &mut self.rng)
    }

    fn handle_move_result(&mut self, _requested: Move, outcome: &MoveOutcome) {
        self.history.record_move(outcome).expect("turn order");
        if let Some(to) = outcome.taken_move.and_then(|m| m.to_square()) {
            self.memory[to.index()] = None;
        }
        if let Some(sq) = outcome.capture_square {
            self.memory[sq.index()] = None;
        }
    }
}
