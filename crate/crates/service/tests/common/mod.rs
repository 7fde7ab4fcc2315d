//! Test helpers: a scripted WebSocket client and binary runners.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use drillsim::server::{spawn, ServerConfig};
use drillsim::wire::{ServerMessage, ServerPayload};
use drillsim_core::agents::Goal;
use drillsim_core::engine::{Action, SessionSnapshot};
use drillsim_core::fire::FireStatus;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const TIMEOUT: Duration = Duration::from_secs(30);

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/golden").join(name)
}

pub fn cohort(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/cohort").join(name)
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn drillsim(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_drillsim")).args(args).output().unwrap();
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// `state_hash` line printed by `drillsim run` on stderr.
pub fn hash_from_stderr(stderr: &str) -> String {
    stderr
        .lines()
        .find_map(|l| l.strip_prefix("state_hash "))
        .expect("run prints the state hash")
        .to_owned()
}

pub async fn start_server(time_scale: f64, log_dir: Option<&Path>) -> String {
    let mut config = ServerConfig::builtin();
    config.time_scale = time_scale;
    config.log_dir = log_dir.map(Path::to_path_buf);
    let (addr, _) = spawn("127.0.0.1:0".parse().unwrap(), config).await.unwrap();
    format!("ws://{addr}/ws")
}

pub struct FakeClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub received: Vec<ServerMessage>,
    pub snapshot: Option<SessionSnapshot>,
}

impl FakeClient {
    pub async fn connect(url: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        Self { ws, received: Vec::new(), snapshot: None }
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_owned().into())).await.unwrap();
    }

    pub async fn send(&mut self, value: serde_json::Value) {
        self.send_raw(&(value.to_string() + "\n")).await;
    }

    /// Sends an action stamped with the tick of the last snapshot seen.
    pub async fn act(&mut self, action: &Action) {
        let tick = self.snapshot.as_ref().map_or(0, |s| s.tick);
        let mut v = serde_json::to_value(action).unwrap();
        v["kind"] = "action".into();
        v["tick"] = tick.into();
        self.send(v).await;
    }

    /// Reads one frame; returns the messages in it.
    pub async fn recv(&mut self) -> Vec<ServerMessage> {
        loop {
            let frame = tokio::time::timeout(TIMEOUT, self.ws.next())
                .await
                .expect("server went quiet")
                .expect("connection closed")
                .unwrap();
            let Message::Text(text) = frame else { continue };
            let msgs: Vec<ServerMessage> = text
                .lines()
                .filter(|l| !l.is_empty())
                .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
                .collect();
            for m in &msgs {
                if let ServerPayload::StateSnapshot { snapshot } = &m.payload {
                    self.snapshot = Some((**snapshot).clone());
                }
            }
            self.received.extend(msgs.iter().cloned());
            return msgs;
        }
    }

    pub async fn recv_until(&mut self, kind: &str) -> ServerMessage {
        loop {
            if let Some(m) = self.recv().await.into_iter().find(|m| m.kind() == kind) {
                return m;
            }
        }
    }

    pub async fn wait_snapshot(&mut self, done: impl Fn(&SessionSnapshot) -> bool) {
        while !self.snapshot.as_ref().is_some_and(&done) {
            self.recv().await;
        }
    }

    /// Plays agent goals from what the snapshots show. Returns the score
    /// message when the goals end with `WaitForCompletion`.
    pub async fn play(&mut self, goals: &[Goal]) -> Option<ServerMessage> {
        for goal in goals {
            match goal {
                Goal::MoveTo(target) => {
                    self.act(&Action::MoveTo { target: target.clone() }).await;
                    let t = target.clone();
                    self.wait_snapshot(move |s| {
                        s.trainee.compartment == t && s.trainee.in_transit.is_none() && s.trainee.route.is_empty()
                    })
                    .await;
                }
                Goal::WaitForPhase(p) => {
                    let p = *p;
                    self.wait_snapshot(move |s| s.phase >= p).await
                }
                Goal::WaitTicks(n) => {
                    let until = self.snapshot.as_ref().map_or(0, |s| s.tick) + n;
                    self.wait_snapshot(move |s| s.tick >= until).await
                }
                Goal::WaitForFireOut => {
                    self.wait_snapshot(|s| s.fire.as_ref().is_some_and(|f| f.status == FireStatus::Extinguished))
                        .await
                }
                Goal::Act(a) => self.act(a).await,
                Goal::WaitForCompletion => return Some(self.recv_until("score").await),
            }
        }
        None
    }
}
