//! Network boundary for a single running session.
//!
//! Routes:
//! - `GET /health`: JSON status
//! - `GET /audio/{id}.wav`: pre-rendered stimulus for a `play_stimulus` id
//! - `GET /ws/session`: the message channel (one client at a time)
//! - `POST /operator/continue`, `POST /operator/timeout`: experimenter controls
//! - anything else: static UI assets, or a placeholder page

pub mod error;
pub mod wire;

mod actor;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use purrfect_core::audio::{encode_wav, render_descriptor, DEFAULT_SAMPLE_RATE};
use purrfect_core::datastore::{SessionHeader, SessionWriter};
use purrfect_core::haptic::{DeviceEventLog, HapticSink, SimulatedDevice, VibrationFrame};
use purrfect_core::session::{Event, Session, SessionPlan, TrialRecord};
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};
use tower_http::services::{ServeDir, ServeFile};

pub use actor::Status;
pub use error::GatewayError;
pub use wire::{MessageType, WireMessage};

use actor::{Actor, Command, Outbound, Shared};

const PLACEHOLDER_PAGE: &str = "<!doctype html><title>Interval trainer</title>\
<p>The trainer UI is not installed. Connect a client to <code>/ws/session</code>.</p>";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub plan: SessionPlan,
    /// Session file to append to; nothing is persisted when absent.
    pub record_path: Option<PathBuf>,
    pub assets_dir: Option<PathBuf>,
    pub software_version: String,
    /// How often the engine clock catches up with real time.
    pub tick: Duration,
}

impl GatewayConfig {
    pub fn new(plan: SessionPlan) -> Self {
        GatewayConfig {
            plan,
            record_path: None,
            assets_dir: None,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            tick: Duration::from_millis(5),
        }
    }
}

/// In-process device simulator whose log stays readable from outside.
#[derive(Clone, Default)]
pub struct SharedSimulator(Arc<Mutex<SimulatedDevice>>);

impl SharedSimulator {
    pub fn log(&self) -> DeviceEventLog {
        self.0.lock().unwrap().log().clone()
    }
}

impl HapticSink for SharedSimulator {
    fn send(&mut self, time_ms: u64, frame: &VibrationFrame) -> std::io::Result<()> {
        self.0.lock().unwrap().send(time_ms, frame)
    }
}

#[derive(Clone)]
pub struct GatewayHandle {
    commands: UnboundedSender<Command>,
    shared: Arc<Shared>,
}

impl GatewayHandle {
    pub fn status(&self) -> Status {
        self.shared.status.lock().unwrap().clone()
    }

    pub fn records(&self) -> Vec<TrialRecord> {
        self.shared.records.lock().unwrap().clone()
    }

    pub fn operator(&self, event: Event) -> Result<(), GatewayError> {
        self.commands.send(Command::Operator(event)).map_err(|_| GatewayError::EngineStopped)
    }
}

pub struct Gateway {
    pub router: Router,
    pub handle: GatewayHandle,
}

/// Starts the session engine task and builds the router. Must run inside a
/// Tokio runtime.
pub fn start(config: GatewayConfig, sink: Box<dyn HapticSink>) -> Result<Gateway, GatewayError> {
    let started_at = chrono::Utc::now();
    let (session, initial) = Session::start(config.plan.clone(), started_at)?;
    let writer = match &config.record_path {
        Some(path) => Some(SessionWriter::create(
            path,
            &SessionHeader {
                participant_id: config.plan.participant_id.clone(),
                condition: config.plan.condition,
                seed: config.plan.seed,
                timing: config.plan.timing,
                software_version: config.software_version.clone(),
                started_at,
            },
        )?),
        None => None,
    };
    let shared = Arc::new(Shared::default());
    let (tx, rx) = unbounded_channel();
    let actor = Actor::new(session, initial, writer, sink, shared.clone(), config.tick);
    tokio::spawn(actor.run(rx));
    let handle = GatewayHandle { commands: tx, shared };

    let mut router = Router::new()
        .route("/health", get(health))
        .route("/audio/{file}", get(audio))
        .route("/ws/session", get(ws_session))
        .route("/operator/continue", post(operator_continue))
        .route("/operator/timeout", post(operator_timeout))
        .with_state(handle.clone());
    router = match &config.assets_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => router.fallback(|| async { Html(PLACEHOLDER_PAGE) }),
    };
    Ok(Gateway { router, handle })
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, GatewayError> {
    TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind { addr, source })
}

pub async fn serve(listener: TcpListener, router: Router) -> Result<(), GatewayError> {
    axum::serve(listener, router).await?;
    Ok(())
}

async fn health(State(h): State<GatewayHandle>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "session": h.status() }))
}

async fn audio(State(h): State<GatewayHandle>, Path(file): Path<String>) -> Response {
    let Some(id) = file.strip_suffix(".wav") else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let desc = h.shared.stimuli.lock().unwrap().get(id).copied();
    let Some(desc) = desc else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match render_descriptor(&desc, DEFAULT_SAMPLE_RATE) {
        Ok(pcm) => ([(header::CONTENT_TYPE, "audio/wav")], encode_wav(&pcm)).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn operator_continue(State(h): State<GatewayHandle>) -> StatusCode {
    operator(&h, Event::Continue)
}

async fn operator_timeout(State(h): State<GatewayHandle>) -> StatusCode {
    operator(&h, Event::PhaseTimeout)
}

fn operator(h: &GatewayHandle, event: Event) -> StatusCode {
    match h.operator(event) {
        Ok(()) => StatusCode::ACCEPTED,
        Err(_) => StatusCode::SERVICE_UNAVAILABLE,
    }
}

async fn ws_session(State(h): State<GatewayHandle>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| pump(socket, h))
}

/// Copies frames between one socket and the engine task until either side closes.
async fn pump(socket: WebSocket, h: GatewayHandle) {
    let conn = h.shared.conn_id();
    let (out_tx, mut out_rx) = unbounded_channel();
    if h.commands.send(Command::Connect { conn, out: out_tx }).is_err() {
        return;
    }
    let (mut tx, mut rx) = socket.split();
    loop {
        tokio::select! {
            out = out_rx.recv() => match out {
                Some(Outbound::Text(text)) => {
                    if tx.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Some(Outbound::Close) | None => {
                    let _ = tx.send(Message::Close(None)).await;
                    break;
                }
            },
            incoming = rx.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let _ = h.commands.send(Command::Client { conn, text: text.to_string() });
                }
                Some(Ok(Message::Binary(_))) => {
                    let _ = h.commands.send(Command::Client { conn, text: String::new() });
                }
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
        }
    }
    let _ = h.commands.send(Command::Disconnect { conn });
}
