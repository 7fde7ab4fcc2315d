//! WebSocket session server.
//!
//! `GET /ws` upgrades to a WebSocket carrying the line protocol from
//! [`crate::wire`]. `GET /levels` lists the scenarios on offer. Each
//! connection is served by its own task and owns at most one session at a
//! time; scenarios are shared read-only.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use drillsim_core::engine::log_to_jsonl;
use drillsim_core::scenario::{builtin_levels, parse_scenario, validate_scenario, Scenario};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::time::Instant;

use crate::live::LiveSession;
use crate::pacing::Pacer;
use crate::wire::{parse_client_frame, ClientMessage, ServerMessage};

#[derive(Debug)]
pub struct ServerConfig {
    pub scenarios: BTreeMap<String, Arc<Scenario>>,
    /// Simulated seconds per wall second.
    pub time_scale: f64,
    /// Where finished session logs are written, if anywhere.
    pub log_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn builtin() -> Self {
        Self {
            scenarios: builtin_levels().into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect(),
            time_scale: 1.0,
            log_dir: None,
        }
    }

    /// Loads every `*.json` scenario in `dir`. Files that fail to parse or
    /// validate are an error: the server should not offer broken drills.
    pub fn from_dir(dir: &Path) -> anyhow::Result<Self> {
        let mut scenarios = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = std::fs::read(&path)?;
            let s = parse_scenario(&bytes).with_context(|| path.display().to_string())?;
            if !validate_scenario(&s).ok {
                bail!("{}: scenario fails validation", path.display());
            }
            scenarios.insert(s.id.clone(), Arc::new(s));
        }
        if scenarios.is_empty() {
            bail!("no valid scenarios in {}", dir.display());
        }
        Ok(Self {
            scenarios,
            time_scale: 1.0,
            log_dir: None,
        })
    }
}

struct AppState {
    config: ServerConfig,
    next_connection: AtomicU64,
}

pub fn router(config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        next_connection: AtomicU64::new(1),
    });
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/levels", get(levels))
        .with_state(state)
}

/// Binds and serves in the background; returns the bound address.
pub async fn spawn(addr: SocketAddr, config: ServerConfig) -> anyhow::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = router(config);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((bound, handle))
}

pub async fn serve(addr: SocketAddr, config: ServerConfig) -> anyhow::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("listening on ws://{}/ws", listener.local_addr()?);
    axum::serve(listener, router(config)).await?;
    Ok(())
}

async fn levels(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let list: Vec<_> = state
        .config
        .scenarios
        .values()
        .map(|s| serde_json::json!({"id": s.id, "title": s.title, "guidance_enabled": s.guidance_enabled}))
        .collect();
    Json(list)
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let id = state.next_connection.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| connection(socket, state, id))
}

struct Running {
    live: LiveSession,
    pacer: Pacer,
}

async fn connection(socket: WebSocket, state: Arc<AppState>, conn: u64) {
    let (mut tx, mut rx) = socket.split();
    let epoch = Instant::now();
    let clock = move || epoch.elapsed();
    let mut running: Option<Running> = None;
    let mut sessions = 0u32;

    loop {
        let deadline = running
            .as_ref()
            .filter(|r| !r.pacer.is_paused() && !r.live.is_finished())
            .map(|r| epoch + r.pacer.next_deadline(clock()));
        let mut out: Vec<ServerMessage> = Vec::new();

        tokio::select! {
            frame = rx.next() => {
                let text = match frame {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let tick = running.as_ref().map_or(0, |r| r.live.session().tick());
                for msg in parse_client_frame(&text) {
                    match msg {
                        Err(e) => out.push(ServerMessage::protocol_error(tick, format!("malformed message: {e}"))),
                        Ok(ClientMessage::StartLevel { level, seed }) => {
                            if running.as_ref().is_some_and(|r| !r.live.is_finished()) {
                                out.push(ServerMessage::protocol_error(tick, "a session is already running; abort it first"));
                                continue;
                            }
                            let Some(scenario) = state.config.scenarios.get(&level) else {
                                out.push(ServerMessage::protocol_error(tick, format!("unknown level `{level}`")));
                                continue;
                            };
                            match LiveSession::start(scenario.clone(), seed, state.config.time_scale) {
                                Ok((live, greeting)) => {
                                    out.extend(greeting);
                                    running = Some(Running { live, pacer: Pacer::new(state.config.time_scale, clock()) });
                                    sessions += 1;
                                }
                                Err(e) => out.push(ServerMessage::protocol_error(tick, e.to_string())),
                            }
                        }
                        Ok(other) => match running.as_mut() {
                            None => out.push(ServerMessage::protocol_error(tick, "send start_level first")),
                            Some(r) => match other {
                                ClientMessage::Action(cmd) => out.extend(r.live.submit(cmd)),
                                ClientMessage::Pause => r.pacer.pause(clock()),
                                ClientMessage::Resume => r.pacer.resume(clock()),
                                ClientMessage::Abort => out.extend(r.live.abort()),
                                ClientMessage::StartLevel { .. } => unreachable!(),
                            },
                        },
                    }
                }
            }
            _ = sleep_until(deadline) => {
                if let Some(r) = running.as_mut() {
                    for _ in 0..r.pacer.due(clock()) {
                        out.extend(r.live.tick());
                        if r.live.is_finished() {
                            break;
                        }
                    }
                }
            }
        }

        if let Some(r) = running.as_ref() {
            if r.live.is_finished() && out.iter().any(|m| m.kind() == "score") {
                write_log(&state.config, conn, sessions, r);
            }
        }
        if !out.is_empty() {
            let text: String = out.iter().map(ServerMessage::to_line).collect();
            if tx.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    }
}

async fn sleep_until(deadline: Option<Instant>) {
    match deadline {
        Some(d) => tokio::time::sleep_until(d).await,
        None => std::future::pending().await,
    }
}

fn write_log(config: &ServerConfig, conn: u64, n: u32, r: &Running) {
    let Some(dir) = &config.log_dir else { return };
    let session = r.live.session();
    let path = dir.join(format!("{}-c{conn}-s{n}.jsonl", session.scenario().id));
    if let Err(e) = std::fs::write(&path, log_to_jsonl(session.log())) {
        tracing::warn!("could not write {}: {e}", path.display());
    }
}
