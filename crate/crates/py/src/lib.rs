//! Python bindings. Structured values cross the boundary as plain Python
//! dicts and lists with the same shape as their JSON encoding, so records
//! and wire messages validate against the shipped schemas unchanged.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use rbc_core::arena::{run_match as core_run_match, BotSpec};
use rbc_core::config::RunConfig;
use rbc_core::encoding::{decode_move_index, encode_move_index, MoveIndex, FRAME_PLANES, MOVE_ACTIONS, STACK_CHANNELS};
use rbc_core::engine::{self, Color, Move, MoveOutcome, SenseAction, SenseOutcome, Square};
use rbc_core::game::{play_game as core_play_game, GameSetup, Player};
use rbc_core::neural::{gradcheck as core_gradcheck, load_checkpoint, GradcheckConfig, NetworkConfig};
use rbc_core::pipeline;
use rbc_core::record::{self, GameRecord};
use rbc_core::service::{self as core_service, ServiceConfig, WireMessage};
use rbc_core::sl::{self, SyntheticConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(rbc, RbcError, PyException, "Engine, training or pipeline failure.");
create_exception!(rbc, ServiceError, PyException, "A rejected service request; `args[0]` is the error code.");

fn err(e: impl std::fmt::Display) -> PyErr {
    RbcError::new_err(e.to_string())
}

fn bad(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn service_err(e: core_service::ServiceError) -> PyErr {
    ServiceError::new_err((e.code(), e.to_string()))
}

/// Any serializable value as the equivalent Python object.
fn to_py(py: Python<'_>, value: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(bad)
}

fn square(s: &str) -> PyResult<Square> {
    s.parse().map_err(bad)
}

fn parse_move(s: &str) -> PyResult<Move> {
    s.parse().map_err(bad)
}

fn color(s: &str) -> PyResult<Color> {
    match s {
        "white" => Ok(Color::White),
        "black" => Ok(Color::Black),
        _ => Err(bad(format!("color must be 'white' or 'black', got {s:?}"))),
    }
}

fn network_preset(name: &str) -> PyResult<NetworkConfig> {
    match name {
        "tiny" => Ok(NetworkConfig::tiny()),
        "desk" => Ok(NetworkConfig::desk()),
        "default" => Ok(NetworkConfig::default()),
        _ => Err(bad(format!("unknown network preset {name:?}; use tiny, desk or default"))),
    }
}

/// The referee's full board. Immutable: moves return a new state.
#[pyclass(module = "rbc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct GroundState {
    inner: engine::GroundState,
}

#[pymethods]
impl GroundState {
    /// The standard starting position, or the position in `fen`.
    #[new]
    #[pyo3(signature = (fen=None, turn_cap=None))]
    fn new(fen: Option<&str>, turn_cap: Option<u32>) -> PyResult<Self> {
        let mut inner = match fen {
            Some(f) => engine::GroundState::from_fen(f).map_err(bad)?,
            None => engine::initial_state(),
        };
        if let Some(cap) = turn_cap {
            inner = inner.with_turn_cap(cap);
        }
        Ok(Self { inner })
    }

    fn fen(&self) -> String {
        self.inner.to_fen()
    }

    #[getter]
    fn side_to_move(&self) -> String {
        self.inner.side_to_move().to_string()
    }

    #[getter]
    fn fullmove(&self) -> u32 {
        self.inner.fullmove()
    }

    /// Moves of the side to move, in UCI, ignoring check.
    fn legal_moves(&self) -> PyResult<Vec<String>> {
        Ok(engine::legal_moves(&self.inner).map_err(err)?.into_iter().map(Move::uci).collect())
    }

    /// The 3x3 window around `center`: a list of `[square, piece or None]`.
    fn sense(&self, py: Python<'_>, center: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &engine::apply_sense(&self.inner, SenseAction(square(center)?)).revealed)
    }

    /// Submits a move (UCI or "pass") for the side to move. Returns the new
    /// state and the outcome dict. Illegal requests consume the turn.
    fn request_move(&self, py: Python<'_>, uci: &str) -> PyResult<(GroundState, Py<PyAny>)> {
        let (next, outcome) = engine::request_move(&self.inner, parse_move(uci)?).map_err(err)?;
        Ok((GroundState { inner: next }, to_py(py, &outcome)?))
    }

    /// `None` while the game runs, else `{"winner": ..., "reason": ...}`.
    fn result(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.result())
    }

    fn __repr__(&self) -> String {
        format!("GroundState({:?})", self.inner.to_fen())
    }
}

/// A scripted bot or network agent built from a spec string such as
/// `random`, `greedy:bias=1` or `net:sl.ckpt:sample=1`. Drive it with the
/// same callbacks the local game loop uses.
#[pyclass(module = "rbc")]
struct Agent {
    spec: String,
    // Python classes must be Sync; players are only Send.
    player: Mutex<Box<dyn Player>>,
}

impl Agent {
    fn build(spec: &str) -> PyResult<(String, Box<dyn Player>)> {
        let parsed: BotSpec = spec.parse().map_err(bad)?;
        let player = parsed.build().map_err(err)?;
        Ok((parsed.to_string(), player))
    }

    fn player(&mut self) -> &mut dyn Player {
        &mut **self.player.get_mut().expect("agent lock")
    }
}

#[pymethods]
impl Agent {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let (spec, player) = Self::build(spec)?;
        Ok(Self {
            spec,
            player: Mutex::new(player),
        })
    }

    #[getter]
    fn spec(&self) -> String {
        self.spec.clone()
    }

    fn handle_game_start(&mut self, color_name: &str, seed: u64) -> PyResult<()> {
        self.player().handle_game_start(color(color_name)?, seed);
        Ok(())
    }

    #[pyo3(signature = (capture_square=None))]
    fn handle_opponent_move_result(&mut self, capture_square: Option<&str>) -> PyResult<()> {
        let capture = capture_square.map(square).transpose()?;
        self.player().handle_opponent_move_result(capture);
        Ok(())
    }

    fn choose_sense(&mut self) -> String {
        self.player().choose_sense().0.to_string()
    }

    /// `revealed` is the list returned by the referee or the service.
    fn handle_sense_result(&mut self, center: &str, revealed: &Bound<'_, PyAny>) -> PyResult<()> {
        let outcome = SenseOutcome { revealed: from_py(revealed)? };
        self.player().handle_sense_result(SenseAction(square(center)?), &outcome);
        Ok(())
    }

    fn choose_move(&mut self) -> String {
        self.player().choose_move().uci()
    }

    /// `outcome` has the keys of a referee move outcome.
    fn handle_move_result(&mut self, requested: &str, outcome: &Bound<'_, PyAny>) -> PyResult<()> {
        let outcome: MoveOutcome = from_py(outcome)?;
        self.player().handle_move_result(parse_move(requested)?, &outcome);
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Agent({:?})", self.spec)
    }
}

/// One full game between two agent specs; returns the game record.
#[pyfunction]
#[pyo3(signature = (white, black, seed, game_id="game", turn_cap=None))]
fn play_game(py: Python<'_>, white: &str, black: &str, seed: u64, game_id: &str, turn_cap: Option<u32>) -> PyResult<Py<PyAny>> {
    let mut w = Agent::build(white)?.1;
    let mut b = Agent::build(black)?.1;
    let mut setup = GameSetup::new(game_id, seed);
    if let Some(cap) = turn_cap {
        setup.turn_cap = cap;
    }
    let rec = py.detach(|| core_play_game(&mut *w, &mut *b, &setup)).map_err(err)?;
    to_py(py, &rec)
}

/// `games` games with alternating colors; returns the match report, scored
/// from `a`'s side.
#[pyfunction]
fn run_match(py: Python<'_>, a: &str, b: &str, games: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let mut pa = Agent::build(a)?.1;
    let mut pb = Agent::build(b)?.1;
    let report = py.detach(|| core_run_match(&mut *pa, &mut *pb, games, seed)).map_err(err)?;
    to_py(py, &report)
}

/// Synthetic scripted-bot games, as a list of records.
#[pyfunction]
#[pyo3(signature = (games, seed, bots=None))]
fn gen_synthetic(py: Python<'_>, games: usize, seed: u64, bots: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
    let mut config = SyntheticConfig {
        games,
        seed,
        ..SyntheticConfig::default()
    };
    if let Some(bots) = bots {
        config.bots = bots.iter().map(|b| b.parse()).collect::<Result<_, _>>().map_err(bad)?;
    }
    let recs = py.detach(|| sl::gen_synthetic(&config)).map_err(err)?;
    to_py(py, &recs)
}

/// Raises `ValueError` unless the record replays through the referee to
/// its stated result.
#[pyfunction]
fn validate_record(record: &Bound<'_, PyAny>) -> PyResult<()> {
    let rec: GameRecord = from_py(record)?;
    record::validate(&rec).map_err(bad)
}

/// Final referee state of a record.
#[pyfunction]
fn replay_record(record: &Bound<'_, PyAny>) -> PyResult<GroundState> {
    let rec: GameRecord = from_py(record)?;
    Ok(GroundState {
        inner: record::replay(&rec).map_err(bad)?,
    })
}

#[pyfunction]
fn encode_move(uci: &str) -> PyResult<usize> {
    Ok(encode_move_index(parse_move(uci)?).map_err(bad)?.get())
}

/// The move at `index`. Pass the mover's pawn squares to resolve
/// underpromotion planes the way the referee would.
#[pyfunction]
#[pyo3(signature = (index, pawns=None))]
fn decode_move(index: usize, pawns: Option<Vec<String>>) -> PyResult<String> {
    let idx = MoveIndex::new(index).ok_or_else(|| bad(format!("move index {index} is out of range")))?;
    let pawns = match pawns {
        Some(list) => Some(list.iter().map(|s| square(s)).collect::<PyResult<_>>()?),
        None => None,
    };
    Ok(decode_move_index(idx, pawns).map_err(bad)?.uci())
}

/// A policy-value network checkpoint.
#[pyclass(module = "rbc", frozen)]
struct Network {
    ckpt: rbc_core::neural::Checkpoint,
}

#[pymethods]
impl Network {
    /// A freshly initialized network from a preset: tiny, desk or default.
    #[new]
    #[pyo3(signature = (preset="desk"))]
    fn new(preset: &str) -> PyResult<Self> {
        let net = rbc_core::neural::PolicyValueNet::new(network_preset(preset)?).map_err(err)?;
        Ok(Self {
            ckpt: rbc_core::neural::Checkpoint::new(net),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            ckpt: load_checkpoint(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        rbc_core::neural::save_checkpoint(path, &self.ckpt).map_err(err)
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.ckpt.net.config)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.ckpt.net.weights.param_count()
    }

    /// Sense logits, move logits and value for a zero-history input at the
    /// start of a game for `color`; a cheap sanity probe.
    #[pyo3(signature = (color_name="white"))]
    fn opening_outputs(&self, color_name: &str) -> PyResult<(Vec<f32>, Vec<f32>, f32)> {
        let history = rbc_core::encoding::ObservationHistory::new(color(color_name)?);
        let mut history = history;
        history.start_turn(None).map_err(err)?;
        let input = history.encode(rbc_core::encoding::Stage::PreSense).map_err(err)?;
        let out = self.ckpt.net.forward(std::slice::from_ref(&input)).pop().expect("one output");
        Ok((out.sense_logits, out.move_logits, out.value))
    }
}

/// Finite-difference gradient check; returns the report dict.
#[pyfunction]
#[pyo3(signature = (preset="tiny", seed=7, tolerance=1e-4))]
fn gradcheck(py: Python<'_>, preset: &str, seed: u64, tolerance: f64) -> PyResult<Py<PyAny>> {
    let config = GradcheckConfig {
        net: network_preset(preset)?,
        seed,
        tolerance,
        ..GradcheckConfig::default()
    };
    let report = py.detach(|| core_gradcheck(&config)).map_err(err)?;
    to_py(py, &report)
}

/// A run configuration from a TOML file (or the defaults) plus
/// `key=value` overrides.
fn run_config(config: Option<PathBuf>, overrides: Option<Vec<String>>) -> PyResult<RunConfig> {
    let mut c = match config {
        Some(p) => RunConfig::load(p).map_err(bad)?,
        None => RunConfig::default(),
    };
    for o in overrides.unwrap_or_default() {
        c.set(&o).map_err(bad)?;
    }
    Ok(c)
}

/// Writes synthetic games to `out/games.jsonl`; returns the count.
#[pyfunction]
#[pyo3(signature = (out, config=None, overrides=None))]
fn gen_data(py: Python<'_>, out: PathBuf, config: Option<PathBuf>, overrides: Option<Vec<String>>) -> PyResult<usize> {
    let c = run_config(config, overrides)?;
    py.detach(|| pipeline::gen_data(&c, &out)).map_err(err)
}

/// Supervised training on a JSON Lines file; returns the summary dict.
#[pyfunction]
#[pyo3(signature = (data, out, config=None, overrides=None))]
fn train_sl(py: Python<'_>, data: PathBuf, out: PathBuf, config: Option<PathBuf>, overrides: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
    let c = run_config(config, overrides)?;
    let summary = py.detach(|| pipeline::train_sl(&c, &data, &out)).map_err(err)?;
    to_py(py, &summary)
}

/// PPO self-play from a supervised checkpoint; returns the summary dict.
#[pyfunction]
#[pyo3(signature = (sl_checkpoint, out, config=None, overrides=None))]
fn train_rl(
    py: Python<'_>,
    sl_checkpoint: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    overrides: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let c = run_config(config, overrides)?;
    let summary = py.detach(|| pipeline::train_rl(&c, Some(&sl_checkpoint), &out, |_| {})).map_err(err)?;
    to_py(py, &summary)
}

/// The game service without a transport. Every method returns wire
/// messages as dicts and raises `ServiceError(code, message)` on rejection.
#[pyclass(module = "rbc", name = "Service")]
struct PyService {
    inner: Mutex<core_service::Service>,
}

impl PyService {
    fn svc(&mut self) -> &mut core_service::Service {
        self.inner.get_mut().expect("service lock")
    }
}

#[pymethods]
impl PyService {
    #[new]
    #[pyo3(signature = (data_dir=None, max_games=64, seed=None))]
    fn new(data_dir: Option<PathBuf>, max_games: usize, seed: Option<u64>) -> PyResult<Self> {
        let inner = core_service::Service::new(ServiceConfig {
            data_dir,
            max_games,
            seed,
        })
        .map_err(service_err)?;
        Ok(Self { inner: Mutex::new(inner) })
    }

    /// `request` has the keys of a create payload: white, black, seed and
    /// optionally turn_cap.
    fn create_game(&mut self, py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let req = from_py(request)?;
        to_py(py, &self.svc().create_game(&req).map_err(service_err)?)
    }

    fn join(&mut self, py: Python<'_>, game_id: &str, color_name: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc().join(game_id, color(color_name)?).map_err(service_err)?)
    }

    fn state(&mut self, py: Python<'_>, game_id: &str, token: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc().state(game_id, token).map_err(service_err)?)
    }

    #[pyo3(signature = (game_id, token, since=0))]
    fn events(&mut self, py: Python<'_>, game_id: &str, token: &str, since: usize) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc().events(game_id, token, since).map_err(service_err)?)
    }

    fn sense(&mut self, py: Python<'_>, game_id: &str, token: &str, center: &str) -> PyResult<Py<PyAny>> {
        let sense = SenseAction(square(center)?);
        to_py(py, &self.svc().submit_sense(game_id, token, sense).map_err(service_err)?)
    }

    /// A malformed `uci` is rejected without consuming the turn.
    fn move_(&mut self, py: Python<'_>, game_id: &str, token: &str, uci: &str) -> PyResult<Py<PyAny>> {
        let mv = uci.parse().map_err(|e: engine::EngineError| service_err(core_service::ServiceError::Malformed(e.to_string())))?;
        to_py(py, &self.svc().submit_move(game_id, token, mv).map_err(service_err)?)
    }

    #[pyo3(signature = (game_id, token=None))]
    fn replay(&mut self, py: Python<'_>, game_id: &str, token: Option<&str>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc().replay(game_id, token).map_err(service_err)?)
    }

    fn list(&mut self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc().list().map_err(service_err)?)
    }

    /// Dispatches one request envelope; errors come back as error messages.
    fn handle(&mut self, py: Python<'_>, message: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let req: WireMessage = from_py(message)?;
        to_py(py, &self.svc().handle(&req))
    }
}

#[pymodule]
fn rbc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MOVE_ACTIONS", MOVE_ACTIONS)?;
    m.add("SENSE_ACTIONS", 64)?;
    m.add("FRAME_PLANES", FRAME_PLANES)?;
    m.add("STACK_CHANNELS", STACK_CHANNELS)?;
    m.add("PROTOCOL_VERSION", core_service::PROTOCOL_VERSION)?;
    m.add("RbcError", m.py().get_type::<RbcError>())?;
    m.add("ServiceError", m.py().get_type::<ServiceError>())?;
    m.add_class::<GroundState>()?;
    m.add_class::<Agent>()?;
    m.add_class::<Network>()?;
    m.add_class::<PyService>()?;
    m.add_function(wrap_pyfunction!(play_game, m)?)?;
    m.add_function(wrap_pyfunction!(run_match, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(validate_record, m)?)?;
    m.add_function(wrap_pyfunction!(replay_record, m)?)?;
    m.add_function(wrap_pyfunction!(encode_move, m)?)?;
    m.add_function(wrap_pyfunction!(decode_move, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(train_sl, m)?)?;
    m.add_function(wrap_pyfunction!(train_rl, m)?)?;
    Ok(())
}
