//! Game records: one JSON object per game, one game per line.
//!
//! Each side's stream holds exactly what that player saw and did, turn by
//! turn. Replaying both streams through the referee must reproduce every
//! recorded outcome.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{
    self, capture_notice, Color, EndReason, EngineError, GameResult, GroundState, Move,
    MoveOutcome, Piece, SenseAction, SenseOutcome, Square, DEFAULT_TURN_CAP,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEntry {
    /// Square where the opponent captured one of our pieces last turn.
    pub opp_capture: Option<Square>,
    pub sense: SenseAction,
    pub sense_result: Vec<(Square, Option<Piece>)>,
    pub requested_move: Move,
    pub taken_move: Option<Move>,
    pub capture_square: Option<Square>,
    pub was_illegal: bool,
}

impl TurnEntry {
    pub fn sense_outcome(&self) -> SenseOutcome {
        SenseOutcome {
            revealed: self.sense_result.clone(),
        }
    }

    pub fn move_outcome(&self) -> MoveOutcome {
        MoveOutcome {
            taken_move: self.taken_move,
            capture_square: self.capture_square,
            was_illegal: self.was_illegal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideRecord {
    pub turns: Vec<TurnEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    White,
    Black,
    Draw,
}

impl Outcome {
    pub fn from_result(result: GameResult) -> Self {
        match result.winner {
            Some(Color::White) => Outcome::White,
            Some(Color::Black) => Outcome::Black,
            None => Outcome::Draw,
        }
    }

    pub fn winner(self) -> Option<Color> {
        match self {
            Outcome::White => Some(Color::White),
            Outcome::Black => Some(Color::Black),
            Outcome::Draw => None,
        }
    }

    /// +1 win, 0 draw, -1 loss from `color`'s side.
    pub fn value_for(self, color: Color) -> f32 {
        match self.winner() {
            None => 0.0,
            Some(w) if w == color => 1.0,
            Some(_) => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameMeta {
    pub white: String,
    pub black: String,
    pub seed: u64,
    #[serde(default = "default_turn_cap")]
    pub turn_cap: u32,
    pub reason: Option<EndReason>,
}

fn default_turn_cap() -> u32 {
    DEFAULT_TURN_CAP
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub id: String,
    pub white: SideRecord,
    pub black: SideRecord,
    pub result: Outcome,
    pub meta: GameMeta,
}

impl GameRecord {
    pub fn side(&self, color: Color) -> &SideRecord {
        match color {
            Color::White => &self.white,
            Color::Black => &self.black,
        }
    }

    pub fn side_mut(&mut self, color: Color) -> &mut SideRecord {
        match color {
            Color::White => &mut self.white,
            Color::Black => &mut self.black,
        }
    }

    /// Total turns played by both sides.
    pub fn plies(&self) -> usize {
        self.white.turns.len() + self.black.turns.len()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("game {game}: {color:?} turn {turn}: {what}")]
    Divergence {
        game: String,
        color: Color,
        turn: usize,
        what: String,
    },
    #[error("game {game}: {message}")]
    Inconsistent { game: String, message: String },
}

impl RecordError {
    fn diverge(rec: &GameRecord, color: Color, turn: usize, what: impl Into<String>) -> Self {
        RecordError::Divergence {
            game: rec.id.clone(),
            color,
            turn,
            what: what.into(),
        }
    }

    fn inconsistent(rec: &GameRecord, message: impl Into<String>) -> Self {
        RecordError::Inconsistent {
            game: rec.id.clone(),
            message: message.into(),
        }
    }
}

/// Replays a record through the referee and returns the final state.
pub fn replay(rec: &GameRecord) -> Result<GroundState, RecordError> {
    let (w, b) = (rec.white.turns.len(), rec.black.turns.len());
    if !(w == b || w == b + 1) {
        return Err(RecordError::inconsistent(rec, format!("{w} white turns but {b} black turns")));
    }
    let mut state = GroundState::initial().with_turn_cap(rec.meta.turn_cap);
    let mut pending: [Option<Square>; 2] = [None, None];
    for ply in 0..w + b {
        let color = state.side_to_move();
        let turn = ply / 2;
        let entry = &rec.side(color).turns[turn];
        if state.result().is_some() {
            return Err(RecordError::diverge(rec, color, turn, "turn recorded after the game ended"));
        }
        if entry.opp_capture != pending[color.index()].take() {
            return Err(RecordError::diverge(rec, color, turn, "capture notice differs"));
        }
        if engine::apply_sense(&state, entry.sense) != entry.sense_outcome() {
            return Err(RecordError::diverge(rec, color, turn, "sense result differs"));
        }
        let (next, outcome) = engine::request_move(&state, entry.requested_move).map_err(|e| match e {
            EngineError::Malformed(m) => RecordError::diverge(rec, color, turn, format!("malformed move: {m}")),
            other => RecordError::diverge(rec, color, turn, other.to_string()),
        })?;
        if outcome != entry.move_outcome() {
            return Err(RecordError::diverge(
                rec,
                color,
                turn,
                format!("move outcome differs: referee {outcome:?}"),
            ));
        }
        pending[color.other().index()] = capture_notice(&outcome, color.other());
        state = next;
    }
    let Some(result) = state.result() else {
        return Err(RecordError::inconsistent(rec, "game does not reach a result"));
    };
    if Outcome::from_result(result) != rec.result {
        return Err(RecordError::inconsistent(
            rec,
            format!("recorded result {:?}, referee {:?}", rec.result, result.winner),
        ));
    }
    if rec.meta.reason.is_some_and(|r| r != result.reason) {
        return Err(RecordError::inconsistent(rec, "end reason differs"));
    }
    Ok(state)
}

pub fn validate(rec: &GameRecord) -> Result<(), RecordError> {
    replay(rec).map(|_| ())
}

/// Valid records plus per-line rejections.
#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<GameRecord>,
    pub rejected: Vec<(usize, RecordError)>,
}

/// Parses and referee-validates every line. Blank lines are skipped.
pub fn ingest_reader(reader: impl BufRead) -> std::io::Result<Ingested> {
    let mut out = Ingested::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<GameRecord, _> = serde_json::from_str(&line);
        match parsed {
            Err(e) => out.rejected.push((
                i + 1,
                RecordError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                },
            )),
            Ok(rec) => match validate(&rec) {
                Ok(()) => out.records.push(rec),
                Err(e) => out.rejected.push((i + 1, e)),
            },
        }
    }
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>) -> std::io::Result<Ingested> {
    ingest_reader(BufReader::new(fs::File::open(path)?))
}

pub fn to_json_line(rec: &GameRecord) -> String {
    serde_json::to_string(rec).expect("records serialize")
}

pub fn write_jsonl<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a GameRecord>,
) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for rec in records {
        writeln!(f, "{}", to_json_line(rec))?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fools_mate_style() -> GameRecord {
        // White walks the queen into the black king with senses on h5.
        let mut state = GroundState::initial();
        let mut rec = GameRecord {
            id: "t".into(),
            white: SideRecord::default(),
            black: SideRecord::default(),
            result: Outcome::White,
            meta: GameMeta {
                white: "a".into(),
                black: "b".into(),
                seed: 0,
                turn_cap: DEFAULT_TURN_CAP,
                reason: Some(EndReason::KingCaptured),
            },
        };
        let moves = ["e2e4", "a7a6", "d1h5", "a6a5", "h5f7", "a5a4", "f7e8"];
        let mut pending = [None, None];
        for m in moves {
            let color = state.side_to_move();
            let sense = SenseAction("h5".parse().unwrap());
            let mv: Move = m.parse().unwrap();
            let (next, out) = engine::request_move(&state, mv).unwrap();
            rec.side_mut(color).turns.push(TurnEntry {
                opp_capture: pending[color.index()],
                sense,
                sense_result: engine::apply_sense(&state, sense).revealed,
                requested_move: mv,
                taken_move: out.taken_move,
                capture_square: out.capture_square,
                was_illegal: out.was_illegal,
            });
            pending[color.index()] = None;
            pending[color.other().index()] = out.capture_square;
            state = next;
        }
        rec
    }

    #[test]
    fn constructed_game_replays() {
        let rec = fools_mate_style();
        let end = replay(&rec).unwrap();
        assert_eq!(end.result().unwrap().winner, Some(Color::White));
        let line = to_json_line(&rec);
        assert_eq!(serde_json::from_str::<GameRecord>(&line).unwrap(), rec);
    }

    #[test]
    fn tampered_taken_move_is_rejected() {
        let mut rec = fools_mate_style();
        rec.white.turns[1].taken_move = Some("d1h4".parse().unwrap());
        assert!(matches!(validate(&rec), Err(RecordError::Divergence { .. })));
    }

    #[test]
    fn wrong_result_is_rejected() {
        let mut rec = fools_mate_style();
        rec.result = Outcome::Draw;
        assert!(matches!(validate(&rec), Err(RecordError::Inconsistent { .. })));
    }

    #[test]
    fn truncated_game_is_rejected() {
        let mut rec = fools_mate_style();
        rec.white.turns.pop();
        assert!(validate(&rec).is_err());
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(fools_mate_style()).unwrap();
        for k in ["id", "white", "black", "result", "meta"] {
            assert!(v.get(k).is_some());
        }
        let t = &v["white"]["turns"][0];
        for k in [
            "opp_capture", "sense", "sense_result", "requested_move", "taken_move", "capture_square",
            "was_illegal",
        ] {
            assert!(t.get(k).is_some(), "{k}");
        }
        assert_eq!(t["requested_move"], "e2e4");
        assert_eq!(v["result"], "white");
    }
}
