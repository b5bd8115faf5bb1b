//! The player interface and the referee-driven game loop.
//!
//! A [`Player`] is told only what its seat legitimately learns: the capture
//! notice at the start of its turn, its own sense result and its own move
//! result. No method ever receives a [`GroundState`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    self, capture_notice, Color, EngineError, GameResult, GroundState, Move, MoveOutcome,
    SenseAction, SenseOutcome, Square, DEFAULT_TURN_CAP,
};
use crate::record::{GameMeta, GameRecord, Outcome, SideRecord, TurnEntry};

pub trait Player: Send {
    fn name(&self) -> String;

    /// Resets the player for a new game. `seed` drives all of its
    /// randomness for that game.
    fn handle_game_start(&mut self, color: Color, seed: u64);

    /// Start of our turn: where the opponent captured one of our pieces.
    fn handle_opponent_move_result(&mut self, capture: Option<Square>);

    fn choose_sense(&mut self) -> SenseAction;

    fn handle_sense_result(&mut self, sense: SenseAction, outcome: &SenseOutcome);

    fn choose_move(&mut self) -> Move;

    fn handle_move_result(&mut self, requested: Move, outcome: &MoveOutcome);

    fn handle_game_end(&mut self, _result: GameResult) {}
}

impl<P: Player + ?Sized> Player for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn handle_game_start(&mut self, color: Color, seed: u64) {
        (**self).handle_game_start(color, seed)
    }
    fn handle_opponent_move_result(&mut self, capture: Option<Square>) {
        (**self).handle_opponent_move_result(capture)
    }
    fn choose_sense(&mut self) -> SenseAction {
        (**self).choose_sense()
    }
    fn handle_sense_result(&mut self, sense: SenseAction, outcome: &SenseOutcome) {
        (**self).handle_sense_result(sense, outcome)
    }
    fn choose_move(&mut self) -> Move {
        (**self).choose_move()
    }
    fn handle_move_result(&mut self, requested: Move, outcome: &MoveOutcome) {
        (**self).handle_move_result(requested, outcome)
    }
    fn handle_game_end(&mut self, result: GameResult) {
        (**self).handle_game_end(result)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSetup {
    pub id: String,
    pub seed: u64,
    pub turn_cap: u32,
}

impl GameSetup {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self {
            id: id.into(),
            seed,
            turn_cap: DEFAULT_TURN_CAP,
        }
    }
}

/// Independent per-seat seeds derived from one game seed.
pub fn seat_seeds(seed: u64) -> [u64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.random(), rng.random()]
}

/// Plays one game to completion and returns its record.
pub fn play_game(
    white: &mut dyn Player,
    black: &mut dyn Player,
    setup: &GameSetup,
) -> Result<GameRecord, EngineError> {
    let seeds = seat_seeds(setup.seed);
    white.handle_game_start(Color::White, seeds[0]);
    black.handle_game_start(Color::Black, seeds[1]);
    let mut state = GroundState::initial().with_turn_cap(setup.turn_cap);
    let mut sides = [SideRecord::default(), SideRecord::default()];
    let mut pending: [Option<Square>; 2] = [None, None];
    let result = loop {
        if let Some(result) = state.result() {
            break result;
        }
        let color = state.side_to_move();
        let player: &mut dyn Player = match color {
            Color::White => &mut *white,
            Color::Black => &mut *black,
        };
        let (next, entry) = play_turn(&state, player, pending[color.index()].take())?;
        pending[color.other().index()] = capture_notice(&entry.move_outcome(), color.other());
        sides[color.index()].turns.push(entry);
        state = next;
    };
    white.handle_game_end(result);
    black.handle_game_end(result);
    let [w, b] = sides;
    Ok(GameRecord {
        id: setup.id.clone(),
        white: w,
        black: b,
        result: Outcome::from_result(result),
        meta: GameMeta {
            white: white.name(),
            black: black.name(),
            seed: setup.seed,
            turn_cap: setup.turn_cap,
            reason: Some(result.reason),
        },
    })
}

/// One full turn for the side to move.
pub fn play_turn(
    state: &GroundState,
    player: &mut dyn Player,
    opp_capture: Option<Square>,
) -> Result<(GroundState, TurnEntry), EngineError> {
    player.handle_opponent_move_result(opp_capture);
    let sense = player.choose_sense();
    let sensed = engine::apply_sense(state, sense);
    player.handle_sense_result(sense, &sensed);
    let requested = player.choose_move();
    let (next, outcome) = engine::request_move(state, requested)?;
    player.handle_move_result(requested, &outcome);
    Ok((
        next,
        TurnEntry {
            opp_capture,
            sense,
            sense_result: sensed.revealed,
            requested_move: requested,
            taken_move: outcome.taken_move,
            capture_square: outcome.capture_square,
            was_illegal: outcome.was_illegal,
        },
    ))
}

/// Feeds a fresh `player` only the events one seat received in `record`
/// and returns the decisions it makes. A player whose decisions match the
/// recorded ones acted on nothing but its own observation stream.
pub fn rerun_side(
    player: &mut dyn Player,
    record: &GameRecord,
    color: Color,
) -> Vec<(SenseAction, Move)> {
    player.handle_game_start(color, seat_seeds(record.meta.seed)[color.index()]);
    let mut out = Vec::new();
    for entry in &record.side(color).turns {
        player.handle_opponent_move_result(entry.opp_capture);
        let sense = player.choose_sense();
        out.push((sense, Move::Pass));
        if sense != entry.sense {
            break;
        }
        player.handle_sense_result(sense, &entry.sense_outcome());
        let mv = player.choose_move();
        out.last_mut().expect("pushed above").1 = mv;
        if mv != entry.requested_move {
            break;
        }
        player.handle_move_result(mv, &entry.move_outcome());
    }
    out
}
