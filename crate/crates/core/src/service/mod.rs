//! Game service: sessions between humans and bots, a versioned JSON
//! message protocol and persistent records of finished games.
//!
//! The referee state of a session never leaves this module before the game
//! ends. Every message addressed to a seat is built from that seat's own
//! sense and move outcomes and the capture notices it is owed, so a seat
//! learns exactly what it would learn as a [`Player`](crate::game::Player).
//! Transport lives elsewhere; this type is synchronous and single-writer.

mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use store::{IndexEntry, Store};

use crate::arena::{ArenaError, BotSpec};
use crate::encoding::{Observation, ObservationHistory};
use crate::engine::{
    self, capture_notice, Color, EngineError, GameResult, GroundState, Move, Piece, SenseAction,
    Square, DEFAULT_TURN_CAP,
};
use crate::game::{seat_seeds, Player};
use crate::record::{to_json_line, GameMeta, GameRecord, Outcome, SideRecord, TurnEntry};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Create,
    Join,
    State,
    SenseResult,
    MoveResult,
    YourTurn,
    GameOver,
    Error,
}

/// The envelope of every request and response. Unknown fields are ignored
/// when reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub version: u32,
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: MessageType, game_id: Option<&str>, payload: impl Serialize) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            kind,
            game_id: game_id.map(String::from),
            token: None,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
        }
    }

    pub fn error(game_id: Option<&str>, err: &ServiceError) -> Self {
        Self::new(
            MessageType::Error,
            game_id,
            ErrorPayload {
                code: err.code().to_string(),
                message: err.to_string(),
            },
        )
    }

    /// Decodes the payload as `T`.
    pub fn payload_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown game {0}")]
    UnknownGame(String),
    #[error("token does not belong to a seat of this game")]
    BadToken,
    #[error("not your turn to {action}: game is {phase}")]
    OutOfTurn { action: &'static str, phase: String },
    #[error("game is finished")]
    Finished,
    #[error("game is not finished")]
    NotFinished,
    #[error("seat {0:?} is not open")]
    SeatTaken(Color),
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("malformed move: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("server is at its limit of {0} concurrent games")]
    TooManyGames(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownGame(_) => "unknown_game",
            ServiceError::BadToken => "bad_token",
            ServiceError::OutOfTurn { .. } => "out_of_turn",
            ServiceError::Finished => "finished",
            ServiceError::NotFinished => "not_finished",
            ServiceError::SeatTaken(_) => "seat_taken",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::Malformed(_) => "malformed_move",
            ServiceError::Version(_) => "version",
            ServiceError::TooManyGames(_) => "too_many_games",
            ServiceError::Io(_) => "internal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeatSpec {
    /// A human seat whose token is issued at creation.
    Human,
    /// A seat claimed later through `join`.
    Open,
    /// Driven by the server; `spec` uses the bot spec syntax.
    Bot { spec: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateGame {
    pub white: SeatSpec,
    pub black: SeatSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub turn_cap: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "color", rename_all = "snake_case")]
pub enum Phase {
    AwaitingSense(Color),
    AwaitingMove(Color),
    Finished,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::AwaitingSense(c) => write!(f, "awaiting {c:?} sense"),
            Phase::AwaitingMove(c) => write!(f, "awaiting {c:?} move"),
            Phase::Finished => write!(f, "finished"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatePayload {
    pub game_id: String,
    pub white_token: Option<String>,
    pub black_token: Option<String>,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinPayload {
    pub color: Color,
    pub token: String,
}

/// Start of one of the seat's turns, with the capture notice it is owed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct YourTurn {
    pub color: Color,
    pub turn: u32,
    pub opp_capture_square: Option<Square>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseResult {
    pub color: Color,
    pub turn: u32,
    pub sense: SenseAction,
    pub revealed: Vec<(Square, Option<Piece>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveResult {
    pub color: Color,
    pub turn: u32,
    pub requested_move: Move,
    pub taken_move: Option<Move>,
    pub capture_square: Option<Square>,
    pub was_illegal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub color: Color,
    pub phase: Phase,
    pub turn: u32,
    /// The seat's current observation frame.
    pub observation: Observation,
    /// Messages in the seat's event log so far.
    pub events: usize,
    pub result: Option<GameResult>,
}

/// Sent to both seats when the game ends; reveals the final board.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameOver {
    pub result: GameResult,
    pub outcome: Outcome,
    pub final_fen: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

/// The caller's own stream of an unfinished game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialReplay {
    pub color: Color,
    pub side: SideRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub game_id: String,
    pub white: String,
    pub black: String,
    pub finished: bool,
    pub result: Option<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Finished games are persisted here when set.
    pub data_dir: Option<PathBuf>,
    pub max_games: usize,
    /// Fixes game ids and tokens; drawn from the OS otherwise.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            max_games: 64,
            seed: None,
        }
    }
}

enum SeatKind {
    Human { token: Option<String> },
    Bot(Box<dyn Player>),
}

struct Seat {
    name: String,
    kind: SeatKind,
    history: ObservationHistory,
    log: Vec<WireMessage>,
    side: SideRecord,
    turn: u32,
    opp_capture: Option<Square>,
    sensed: Option<(SenseAction, Vec<(Square, Option<Piece>)>)>,
}

impl Seat {
    fn token(&self) -> Option<&str> {
        match &self.kind {
            SeatKind::Human { token } => token.as_deref(),
            SeatKind::Bot(_) => None,
        }
    }
}

struct Session {
    id: String,
    seed: u64,
    turn_cap: u32,
    state: GroundState,
    seats: [Seat; 2],
    phase: Phase,
    result: Option<GameResult>,
    /// The stored record line once finished.
    record_line: Option<String>,
}

impl Session {
    fn seat_of(&self, token: &str) -> Result<Color, ServiceError> {
        [Color::White, Color::Black]
            .into_iter()
            .find(|c| self.seats[c.index()].token() == Some(token))
            .ok_or(ServiceError::BadToken)
    }

    fn push(&mut self, color: Color, kind: MessageType, payload: impl Serialize) -> WireMessage {
        let msg = WireMessage::new(kind, Some(&self.id), payload);
        self.seats[color.index()].log.push(msg.clone());
        msg
    }

    fn start_turn(&mut self, color: Color, notice: Option<Square>) {
        let seat = &mut self.seats[color.index()];
        seat.turn += 1;
        seat.opp_capture = notice;
        seat.history.start_turn(notice).expect("service drives turns in order");
        if let SeatKind::Bot(p) = &mut seat.kind {
            p.handle_opponent_move_result(notice);
        }
        let turn = seat.turn;
        self.push(
            color,
            MessageType::YourTurn,
            YourTurn {
                color,
                turn,
                opp_capture_square: notice,
            },
        );
    }

    fn check_turn(&self, color: Color, sense: bool) -> Result<(), ServiceError> {
        let want = if sense { Phase::AwaitingSense(color) } else { Phase::AwaitingMove(color) };
        match self.phase {
            Phase::Finished => Err(ServiceError::Finished),
            p if p == want => Ok(()),
            p => Err(ServiceError::OutOfTurn {
                action: if sense { "sense" } else { "move" },
                phase: p.to_string(),
            }),
        }
    }

    fn do_sense(&mut self, color: Color, sense: SenseAction) -> Result<WireMessage, ServiceError> {
        self.check_turn(color, true)?;
        let outcome = engine::apply_sense(&self.state, sense);
        let seat = &mut self.seats[color.index()];
        seat.history.record_sense(sense, &outcome).expect("service drives turns in order");
        if let SeatKind::Bot(p) = &mut seat.kind {
            p.handle_sense_result(sense, &outcome);
        }
        seat.sensed = Some((sense, outcome.revealed.clone()));
        let turn = seat.turn;
        self.phase = Phase::AwaitingMove(color);
        Ok(self.push(
            color,
            MessageType::SenseResult,
            SenseResult {
                color,
                turn,
                sense,
                revealed: outcome.revealed,
            },
        ))
    }

    fn do_move(&mut self, color: Color, requested: Move) -> Result<WireMessage, ServiceError> {
        self.check_turn(color, false)?;
        let (next, outcome) = engine::request_move(&self.state, requested).map_err(|e| match e {
            EngineError::Malformed(m) => ServiceError::Malformed(m),
            other => ServiceError::Malformed(other.to_string()),
        })?;
        let seat = &mut self.seats[color.index()];
        seat.history.record_move(&outcome).expect("service drives turns in order");
        if let SeatKind::Bot(p) = &mut seat.kind {
            p.handle_move_result(requested, &outcome);
        }
        let (sense, sense_result) = seat.sensed.take().expect("sensed before moving");
        seat.side.turns.push(TurnEntry {
            opp_capture: seat.opp_capture,
            sense,
            sense_result,
            requested_move: requested,
            taken_move: outcome.taken_move,
            capture_square: outcome.capture_square,
            was_illegal: outcome.was_illegal,
        });
        let turn = seat.turn;
        self.state = next;
        let msg = self.push(
            color,
            MessageType::MoveResult,
            MoveResult {
                color,
                turn,
                requested_move: requested,
                taken_move: outcome.taken_move,
                capture_square: outcome.capture_square,
                was_illegal: outcome.was_illegal,
            },
        );
        match self.state.result() {
            Some(result) => self.finish(result),
            None => {
                self.phase = Phase::AwaitingSense(color.other());
                self.start_turn(color.other(), capture_notice(&outcome, color.other()));
            }
        }
        Ok(msg)
    }

    fn finish(&mut self, result: GameResult) {
        self.phase = Phase::Finished;
        self.result = Some(result);
        for seat in &mut self.seats {
            if let SeatKind::Bot(p) = &mut seat.kind {
                p.handle_game_end(result);
            }
        }
        let over = GameOver {
            result,
            outcome: Outcome::from_result(result),
            final_fen: self.state.to_fen(),
        };
        self.push(Color::White, MessageType::GameOver, &over);
        self.push(Color::Black, MessageType::GameOver, &over);
        self.record_line = Some(to_json_line(&self.record()));
    }

    fn record(&self) -> GameRecord {
        let [w, b] = &self.seats;
        GameRecord {
            id: self.id.clone(),
            white: w.side.clone(),
            black: b.side.clone(),
            result: self.result.map(Outcome::from_result).unwrap_or(Outcome::Draw),
            meta: GameMeta {
                white: w.name.clone(),
                black: b.name.clone(),
                seed: self.seed,
                turn_cap: self.turn_cap,
                reason: self.result.map(|r| r.reason),
            },
        }
    }

    /// Lets bots act until a human must move or the game ends.
    fn drive_bots(&mut self) -> Result<(), ServiceError> {
        loop {
            let color = match self.phase {
                Phase::AwaitingSense(c) => c,
                _ => return Ok(()),
            };
            let SeatKind::Bot(p) = &mut self.seats[color.index()].kind else {
                return Ok(());
            };
            let sense = p.choose_sense();
            self.do_sense(color, sense)?;
            let SeatKind::Bot(p) = &mut self.seats[color.index()].kind else {
                unreachable!("seat kinds never change");
            };
            let mv = p.choose_move();
            if self.do_move(color, mv).is_err() {
                // A bot that asks for a malformed move passes instead.
                self.do_move(color, Move::Pass)?;
            }
        }
    }
}

pub struct Service {
    config: ServiceConfig,
    sessions: BTreeMap<String, Session>,
    store: Option<Store>,
    rng: ChaCha8Rng,
}

impl Service {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let store = config.data_dir.as_ref().map(Store::open).transpose()?;
        let rng = match config.seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        Ok(Self {
            config,
            sessions: BTreeMap::new(),
            store,
            rng,
        })
    }

    fn hex(&mut self, words: usize) -> String {
        (0..words).map(|_| format!("{:016x}", self.rng.random::<u64>())).collect()
    }

    fn session(&mut self, id: &str) -> Result<&mut Session, ServiceError> {
        self.sessions.get_mut(id).ok_or_else(|| ServiceError::UnknownGame(id.into()))
    }

    fn active_games(&self) -> usize {
        self.sessions.values().filter(|s| s.phase != Phase::Finished).count()
    }

    pub fn create_game(&mut self, req: &CreateGame) -> Result<WireMessage, ServiceError> {
        if self.active_games() >= self.config.max_games {
            return Err(ServiceError::TooManyGames(self.config.max_games));
        }
        let turn_cap = req.turn_cap.unwrap_or(DEFAULT_TURN_CAP);
        if turn_cap == 0 {
            return Err(ServiceError::InvalidConfig("turn_cap must be positive".into()));
        }
        let id = self.hex(1);
        let seeds = seat_seeds(req.seed);
        let mut tokens = [None, None];
        let mut seats = Vec::with_capacity(2);
        for (color, spec) in [(Color::White, &req.white), (Color::Black, &req.black)] {
            let (name, kind) = match spec {
                SeatSpec::Human => {
                    let t = self.hex(2);
                    tokens[color.index()] = Some(t.clone());
                    ("human".to_string(), SeatKind::Human { token: Some(t) })
                }
                SeatSpec::Open => ("human".to_string(), SeatKind::Human { token: None }),
                SeatSpec::Bot { spec } => {
                    let bot: BotSpec = spec.parse().map_err(|e: ArenaError| ServiceError::InvalidConfig(e.to_string()))?;
                    let mut p = bot.build().map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
                    p.handle_game_start(color, seeds[color.index()]);
                    (p.name(), SeatKind::Bot(p))
                }
            };
            seats.push(Seat {
                name,
                kind,
                history: ObservationHistory::new(color),
                log: Vec::new(),
                side: SideRecord::default(),
                turn: 0,
                opp_capture: None,
                sensed: None,
            });
        }
        let black = seats.pop().expect("two seats");
        let white = seats.pop().expect("two seats");
        let mut s = Session {
            id: id.clone(),
            seed: req.seed,
            turn_cap,
            state: GroundState::initial().with_turn_cap(turn_cap),
            seats: [white, black],
            phase: Phase::AwaitingSense(Color::White),
            result: None,
            record_line: None,
        };
        s.start_turn(Color::White, None);
        s.drive_bots()?;
        let phase = s.phase;
        self.sessions.insert(id.clone(), s);
        self.persist(&id)?;
        let [white_token, black_token] = tokens;
        Ok(WireMessage::new(
            MessageType::Create,
            Some(&id),
            CreatePayload {
                game_id: id.clone(),
                white_token,
                black_token,
                phase,
            },
        ))
    }

    pub fn join(&mut self, game_id: &str, color: Color) -> Result<WireMessage, ServiceError> {
        let token = self.hex(2);
        let s = self.session(game_id)?;
        match &mut s.seats[color.index()].kind {
            SeatKind::Human { token: slot @ None } => *slot = Some(token.clone()),
            _ => return Err(ServiceError::SeatTaken(color)),
        }
        let mut msg = WireMessage::new(MessageType::Join, Some(game_id), JoinPayload { color, token: token.clone() });
        msg.token = Some(token);
        Ok(msg)
    }

    pub fn state(&mut self, game_id: &str, token: &str) -> Result<WireMessage, ServiceError> {
        let s = self.session(game_id)?;
        let color = s.seat_of(token)?;
        let seat = &s.seats[color.index()];
        let payload = StatePayload {
            color,
            phase: s.phase,
            turn: seat.turn,
            observation: seat.history.current().clone(),
            events: seat.log.len(),
            result: s.result,
        };
        Ok(WireMessage::new(MessageType::State, Some(game_id), payload))
    }

    /// The seat's event log from index `since` on.
    pub fn events(&mut self, game_id: &str, token: &str, since: usize) -> Result<Vec<WireMessage>, ServiceError> {
        let s = self.session(game_id)?;
        let color = s.seat_of(token)?;
        let log = &s.seats[color.index()].log;
        Ok(log.get(since..).unwrap_or_default().to_vec())
    }

    pub fn submit_sense(&mut self, game_id: &str, token: &str, sense: SenseAction) -> Result<WireMessage, ServiceError> {
        let s = self.session(game_id)?;
        let color = s.seat_of(token)?;
        s.do_sense(color, sense)
    }

    pub fn submit_move(&mut self, game_id: &str, token: &str, mv: Move) -> Result<WireMessage, ServiceError> {
        let s = self.session(game_id)?;
        let color = s.seat_of(token)?;
        let msg = s.do_move(color, mv)?;
        s.drive_bots()?;
        self.persist(game_id)?;
        Ok(msg)
    }

    fn persist(&mut self, game_id: &str) -> Result<(), ServiceError> {
        let Some(store) = self.store.as_mut() else {
            return Ok(());
        };
        let s = self.sessions.get(game_id).expect("persisting a live session");
        if let Some(line) = &s.record_line {
            if !store.contains(game_id) {
                store.append(game_id, line)?;
            }
        }
        Ok(())
    }

    fn finished_line(&self, game_id: &str) -> Result<Option<String>, ServiceError> {
        if let Some(store) = &self.store {
            if let Some(line) = store.read(game_id)? {
                return Ok(Some(line));
            }
        }
        Ok(self.sessions.get(game_id).and_then(|s| s.record_line.clone()))
    }

    /// A finished game's full record; for an unfinished game only the
    /// caller's own stream, and only with a valid token.
    pub fn replay(&mut self, game_id: &str, token: Option<&str>) -> Result<WireMessage, ServiceError> {
        if let Some(line) = self.finished_line(game_id)? {
            let record: Value = serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            return Ok(WireMessage::new(MessageType::State, Some(game_id), record));
        }
        let s = self.session(game_id)?;
        let token = token.ok_or(ServiceError::NotFinished)?;
        let color = s.seat_of(token)?;
        let side = s.seats[color.index()].side.clone();
        Ok(WireMessage::new(MessageType::State, Some(game_id), PartialReplay { color, side }))
    }

    pub fn list(&self) -> Result<Vec<GameSummary>, ServiceError> {
        let mut out: BTreeMap<String, GameSummary> = BTreeMap::new();
        if let Some(store) = &self.store {
            for id in store.ids() {
                if let Some(line) = store.read(id)? {
                    if let Ok(rec) = serde_json::from_str::<GameRecord>(&line) {
                        out.insert(
                            id.to_string(),
                            GameSummary {
                                game_id: id.to_string(),
                                white: rec.meta.white,
                                black: rec.meta.black,
                                finished: true,
                                result: Some(rec.result),
                            },
                        );
                    }
                }
            }
        }
        for s in self.sessions.values() {
            out.insert(
                s.id.clone(),
                GameSummary {
                    game_id: s.id.clone(),
                    white: s.seats[0].name.clone(),
                    black: s.seats[1].name.clone(),
                    finished: s.phase == Phase::Finished,
                    result: s.result.map(Outcome::from_result),
                },
            );
        }
        Ok(out.into_values().collect())
    }

    /// Dispatches a request envelope. `create` carries a [`CreateGame`];
    /// `join` a `{color}`; `state` needs the token; `sense_result` and
    /// `move_result` carry `{sense}` / `{move}` submissions.
    pub fn handle(&mut self, req: &WireMessage) -> WireMessage {
        let game = req.game_id.as_deref();
        let res = self.dispatch(req);
        res.unwrap_or_else(|e| WireMessage::error(game, &e))
    }

    fn dispatch(&mut self, req: &WireMessage) -> Result<WireMessage, ServiceError> {
        if req.version != PROTOCOL_VERSION {
            return Err(ServiceError::Version(req.version));
        }
        let bad = |e: serde_json::Error| ServiceError::InvalidConfig(e.to_string());
        let game = || req.game_id.as_deref().ok_or_else(|| ServiceError::InvalidConfig("game_id is required".into()));
        let token = || req.token.as_deref().ok_or(ServiceError::BadToken);
        match req.kind {
            MessageType::Create => self.create_game(&req.payload_as::<CreateGame>().map_err(bad)?),
            MessageType::Join => {
                #[derive(Deserialize)]
                struct J {
                    color: Color,
                }
                let j: J = req.payload_as().map_err(bad)?;
                self.join(game()?, j.color)
            }
            MessageType::State => self.state(game()?, token()?),
            MessageType::SenseResult => {
                #[derive(Deserialize)]
                struct S {
                    sense: SenseAction,
                }
                let s: S = req.payload_as().map_err(bad)?;
                self.submit_sense(game()?, token()?, s.sense)
            }
            MessageType::MoveResult => {
                #[derive(Deserialize)]
                struct M {
                    #[serde(rename = "move")]
                    mv: Move,
                }
                let m: M = req.payload_as().map_err(|e| ServiceError::Malformed(e.to_string()))?;
                self.submit_move(game()?, token()?, m.mv)
            }
            other => Err(ServiceError::InvalidConfig(format!("{other:?} is not a request"))),
        }
    }
}
