//! Messages exchanged with live clients.
//!
//! Every message is one JSON object on its own line, tagged by `kind`. Over
//! WebSocket each text frame carries one or more such lines. See
//! `docs/protocol.md` for the full reference.

use std::collections::BTreeSet;

use drillsim_core::engine::{ActionCommand, SessionSnapshot};
use drillsim_core::fire::{Cue, FireStatus};
use drillsim_core::layout::LayoutDoc;
use drillsim_core::protocol::{DrillError, DrillPhase};
use drillsim_core::scoring::ScoreReport;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    StartLevel {
        level: String,
        #[serde(default)]
        seed: u64,
    },
    Action(ActionCommand),
    Pause,
    Resume,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerPayload {
    Hello {
        protocol_version: u32,
        engine_version: String,
        level: String,
        title: String,
        guidance_enabled: bool,
        ticks_per_second: u64,
        time_scale: f64,
        layout: LayoutDoc,
    },
    StateSnapshot {
        snapshot: Box<SessionSnapshot>,
    },
    Cue {
        cues: BTreeSet<Cue>,
    },
    Guidance {
        text: Option<String>,
    },
    PhaseChanged {
        from: DrillPhase,
        to: DrillPhase,
    },
    ErrorLogged {
        error: DrillError,
    },
    FireUpdate {
        intensity: f64,
        status: FireStatus,
        extinguishable_progress: Option<f64>,
    },
    Score {
        report: ScoreReport,
        state_hash: String,
        total_ticks: u64,
    },
    ProtocolError {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub tick: u64,
    #[serde(flatten)]
    pub payload: ServerPayload,
}

impl ServerMessage {
    pub fn new(tick: u64, payload: ServerPayload) -> Self {
        Self { tick, payload }
    }

    pub fn protocol_error(tick: u64, message: impl Into<String>) -> Self {
        Self::new(tick, ServerPayload::ProtocolError { message: message.into() })
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            ServerPayload::Hello { .. } => "hello",
            ServerPayload::StateSnapshot { .. } => "state_snapshot",
            ServerPayload::Cue { .. } => "cue",
            ServerPayload::Guidance { .. } => "guidance",
            ServerPayload::PhaseChanged { .. } => "phase_changed",
            ServerPayload::ErrorLogged { .. } => "error_logged",
            ServerPayload::FireUpdate { .. } => "fire_update",
            ServerPayload::Score { .. } => "score",
            ServerPayload::ProtocolError { .. } => "protocol_error",
        }
    }

    /// One line of newline-delimited JSON, including the newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server message serializes") + "\n"
    }
}

/// Splits a frame into client messages, one per nonblank line.
pub fn parse_client_frame(text: &str) -> Vec<Result<ClientMessage, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}
