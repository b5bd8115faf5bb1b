//! HTTP transport for the game service. Every body is a versioned
//! [`WireMessage`] (or a list of them); requests may send the bare payload.
//!
//! Seat tokens go in `Authorization: Bearer <token>` or `?token=`.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rbc_core::config::ServiceOptions;
use rbc_core::engine::{Color, EngineError, SenseAction};
use rbc_core::service::{CreateGame, Service, ServiceConfig, ServiceError, WireMessage};
use serde::Deserialize;
use tokio::sync::Notify;

/// Upper bound on one long-poll wait.
const MAX_WAIT: Duration = Duration::from_secs(30);

struct AppState {
    service: Mutex<Service>,
    changed: Notify,
}

type Shared = Arc<AppState>;

fn status(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownGame(_) => StatusCode::NOT_FOUND,
        ServiceError::BadToken => StatusCode::FORBIDDEN,
        ServiceError::OutOfTurn { .. } | ServiceError::Finished | ServiceError::NotFinished | ServiceError::SeatTaken(_) => {
            StatusCode::CONFLICT
        }
        ServiceError::InvalidConfig(_) | ServiceError::Malformed(_) | ServiceError::Version(_) => StatusCode::BAD_REQUEST,
        ServiceError::TooManyGames(_) => StatusCode::SERVICE_UNAVAILABLE,
        ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error(game: Option<&str>, e: ServiceError) -> Response {
    (status(&e), Json(WireMessage::error(game, &e))).into_response()
}

fn reply(game: Option<&str>, r: Result<WireMessage, ServiceError>) -> Response {
    match r {
        Ok(m) => Json(m).into_response(),
        Err(e) => error(game, e),
    }
}

#[derive(Deserialize, Default)]
struct TokenQuery {
    token: Option<String>,
}

fn token(headers: &HeaderMap, q: &TokenQuery) -> Option<String> {
    let bearer = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string());
    bearer.or_else(|| q.token.clone())
}

fn require_token(headers: &HeaderMap, q: &TokenQuery) -> Result<String, ServiceError> {
    token(headers, q).ok_or(ServiceError::BadToken)
}

impl AppState {
    /// Runs a mutation and wakes long-polling readers.
    fn mutate<T>(&self, f: impl FnOnce(&mut Service) -> T) -> T {
        let out = f(&mut self.service.lock().expect("service lock"));
        self.changed.notify_waiters();
        out
    }

    fn read<T>(&self, f: impl FnOnce(&mut Service) -> T) -> T {
        f(&mut self.service.lock().expect("service lock"))
    }
}

async fn create(State(st): State<Shared>, Json(req): Json<CreateGame>) -> Response {
    reply(None, st.mutate(|s| s.create_game(&req)))
}

#[derive(Deserialize)]
struct JoinBody {
    color: Color,
}

async fn join(State(st): State<Shared>, Path(id): Path<String>, Json(b): Json<JoinBody>) -> Response {
    reply(Some(&id), st.mutate(|s| s.join(&id, b.color)))
}

async fn state(State(st): State<Shared>, Path(id): Path<String>, headers: HeaderMap, Query(q): Query<TokenQuery>) -> Response {
    let r = require_token(&headers, &q).and_then(|t| st.read(|s| s.state(&id, &t)));
    reply(Some(&id), r)
}

#[derive(Deserialize)]
struct EventsQuery {
    token: Option<String>,
    #[serde(default)]
    since: usize,
    #[serde(default)]
    wait_ms: u64,
}

/// The seat's events from `since`; with `wait_ms`, blocks until at least
/// one exists or the wait runs out.
async fn events(State(st): State<Shared>, Path(id): Path<String>, headers: HeaderMap, Query(q): Query<EventsQuery>) -> Response {
    let t = match require_token(&headers, &TokenQuery { token: q.token.clone() }) {
        Ok(t) => t,
        Err(e) => return error(Some(&id), e),
    };
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait_ms).min(MAX_WAIT);
    loop {
        // Registered before the read so a mutation in between is not missed.
        let notified = st.changed.notified();
        match st.read(|s| s.events(&id, &t, q.since)) {
            Err(e) => return error(Some(&id), e),
            Ok(evs) if !evs.is_empty() || tokio::time::Instant::now() >= deadline => return Json(evs).into_response(),
            Ok(_) => {}
        }
        tokio::select! {
            _ = notified => {}
            _ = tokio::time::sleep_until(deadline) => {}
        }
    }
}

#[derive(Deserialize)]
struct SenseBody {
    sense: SenseAction,
}

async fn sense(
    State(st): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    Json(b): Json<SenseBody>,
) -> Response {
    let r = require_token(&headers, &q).and_then(|t| st.mutate(|s| s.submit_sense(&id, &t, b.sense)));
    reply(Some(&id), r)
}

/// The move stays a raw string so a malformed one gets a protocol error
/// rather than a generic rejection.
#[derive(Deserialize)]
struct MoveBody {
    #[serde(rename = "move")]
    mv: String,
}

async fn submit_move(
    State(st): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    Json(b): Json<MoveBody>,
) -> Response {
    let r = require_token(&headers, &q).and_then(|t| {
        let mv = b.mv.parse().map_err(|e| match e {
            EngineError::Malformed(m) => ServiceError::Malformed(m),
            e => ServiceError::Malformed(e.to_string()),
        })?;
        st.mutate(|s| s.submit_move(&id, &t, mv))
    });
    reply(Some(&id), r)
}

async fn replay(State(st): State<Shared>, Path(id): Path<String>, headers: HeaderMap, Query(q): Query<TokenQuery>) -> Response {
    let t = token(&headers, &q);
    reply(Some(&id), st.read(|s| s.replay(&id, t.as_deref())))
}

async fn list(State(st): State<Shared>) -> Response {
    match st.read(|s| s.list()) {
        Ok(games) => Json(games).into_response(),
        Err(e) => error(None, e),
    }
}

/// Accepts a full request envelope.
async fn rpc(State(st): State<Shared>, Json(req): Json<WireMessage>) -> Response {
    let resp = st.mutate(|s| s.handle(&req));
    Json(resp).into_response()
}

pub fn router(service: Service) -> Router {
    let st = Arc::new(AppState {
        service: Mutex::new(service),
        changed: Notify::new(),
    });
    Router::new()
        .route("/games", post(create).get(list))
        .route("/games/{id}/join", post(join))
        .route("/games/{id}/state", get(state))
        .route("/games/{id}/events", get(events))
        .route("/games/{id}/sense", post(sense))
        .route("/games/{id}/move", post(submit_move))
        .route("/games/{id}/replay", get(replay))
        .route("/rpc", post(rpc))
        .with_state(st)
}

pub fn serve(opts: &ServiceOptions) -> anyhow::Result<()> {
    let service = Service::new(ServiceConfig {
        data_dir: Some(opts.data_dir.clone()),
        max_games: opts.max_games,
        seed: None,
    })?;
    let app = router(service);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&opts.bind).await?;
        println!("listening on {}", listener.local_addr()?);
        use std::io::Write as _;
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
