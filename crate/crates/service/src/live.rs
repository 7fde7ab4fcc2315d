//! One live session as seen by a connected client.
//!
//! [`LiveSession`] has no clock and no I/O. The connection task decides when
//! a tick is due and forwards what this type returns.

use std::collections::VecDeque;
use std::sync::Arc;

use drillsim_core::engine::{
    ActionCommand, DrillSession, EngineError, EventKind, FinishReason, ENGINE_VERSION,
    TICKS_PER_SECOND,
};
use drillsim_core::protocol::DrillPhase;
use drillsim_core::scenario::Scenario;
use drillsim_core::scoring::score_session;

use crate::wire::{ServerMessage, ServerPayload, PROTOCOL_VERSION};

/// Snapshots go out at least this often, in ticks.
pub const SNAPSHOT_EVERY: u64 = TICKS_PER_SECOND;

#[derive(Debug)]
pub struct LiveSession {
    session: DrillSession,
    queue: VecDeque<ActionCommand>,
    cursor: usize,
    guidance: Option<&'static str>,
}

impl LiveSession {
    /// Opens a session and returns the greeting: `hello`, a first snapshot
    /// and, on guided levels, the first hint.
    pub fn start(
        scenario: Arc<Scenario>,
        seed: u64,
        time_scale: f64,
    ) -> Result<(Self, Vec<ServerMessage>), EngineError> {
        let session = DrillSession::new(scenario.clone(), seed)?;
        let live = Self {
            cursor: session.log().len(),
            guidance: session.guidance(),
            session,
            queue: VecDeque::new(),
        };
        let mut out = vec![ServerMessage::new(
            0,
            ServerPayload::Hello {
                protocol_version: PROTOCOL_VERSION,
                engine_version: ENGINE_VERSION.to_owned(),
                level: scenario.id.clone(),
                title: scenario.title.clone(),
                guidance_enabled: scenario.guidance_enabled,
                ticks_per_second: TICKS_PER_SECOND,
                time_scale,
                layout: scenario.layout.clone().into(),
            },
        )];
        out.push(live.snapshot());
        if let Some(text) = live.guidance {
            out.push(ServerMessage::new(0, ServerPayload::Guidance { text: Some(text.to_owned()) }));
        }
        Ok((live, out))
    }

    pub fn session(&self) -> &DrillSession {
        &self.session
    }

    pub fn is_finished(&self) -> bool {
        self.session.finished().is_some()
    }

    /// Queues a client command. It runs on the first tick at or after its
    /// own; commands for past ticks are moved to the current tick.
    pub fn submit(&mut self, command: ActionCommand) -> Option<ServerMessage> {
        if self.is_finished() {
            return Some(ServerMessage::protocol_error(self.session.tick(), "session already finished"));
        }
        self.queue.push_back(command);
        None
    }

    /// Simulates one tick, running at most one queued command.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        if self.is_finished() {
            return Vec::new();
        }
        let now = self.session.tick();
        let result = match self.queue.front() {
            Some(c) if c.tick <= now => {
                let original = self.queue.pop_front().expect("front exists");
                let rebased_from = (original.tick != now).then_some(original.tick);
                let cmd = ActionCommand::new(now, original.action);
                self.session.step_annotated(&cmd, rebased_from).map(|_| ())
            }
            _ => self.session.advance(),
        };
        result.expect("live session is open and commands are rebased to the current tick");

        let mut out = self.drain_events();
        let phase_changed = out.iter().any(|m| matches!(m.payload, ServerPayload::PhaseChanged { .. }));
        let tick = self.session.tick();
        if tick % SNAPSHOT_EVERY == 0 && self.session.checklist().discovered {
            if let Some(f) = self.session.snapshot().fire {
                out.push(ServerMessage::new(
                    tick,
                    ServerPayload::FireUpdate {
                        intensity: f.intensity,
                        status: f.status,
                        extinguishable_progress: f.extinguishable_progress,
                    },
                ));
            }
        }
        if phase_changed || tick % SNAPSHOT_EVERY == 0 {
            out.push(self.snapshot());
        }

        if self.session.phase() == DrillPhase::Complete {
            out.extend(self.close(FinishReason::Complete));
        } else if self.session.time_limit_reached() {
            out.extend(self.close(FinishReason::TimeLimit));
        }
        out
    }

    pub fn abort(&mut self) -> Vec<ServerMessage> {
        if self.is_finished() {
            return Vec::new();
        }
        self.close(FinishReason::Aborted)
    }

    fn close(&mut self, reason: FinishReason) -> Vec<ServerMessage> {
        self.session.finish(reason);
        let mut out = self.drain_events();
        let report = score_session(&self.session).expect("finished session scores");
        out.push(ServerMessage::new(
            self.session.tick(),
            ServerPayload::Score {
                report,
                state_hash: self.session.state_hash(),
                total_ticks: self.session.tick(),
            },
        ));
        out
    }

    fn snapshot(&self) -> ServerMessage {
        ServerMessage::new(
            self.session.tick(),
            ServerPayload::StateSnapshot { snapshot: Box::new(self.session.snapshot()) },
        )
    }

    fn drain_events(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        for e in &self.session.log()[self.cursor..] {
            let payload = match &e.kind {
                EventKind::PhaseChanged { from, to } => ServerPayload::PhaseChanged { from: *from, to: *to },
                EventKind::CuesChanged { cues } => ServerPayload::Cue { cues: cues.clone() },
                EventKind::ErrorLogged { error } => ServerPayload::ErrorLogged { error: error.clone() },
                EventKind::FireExtinguished => {
                    let fire = self.session.fire();
                    ServerPayload::FireUpdate {
                        intensity: fire.intensity,
                        status: fire.status,
                        extinguishable_progress: Some(1.0),
                    }
                }
                _ => continue,
            };
            out.push(ServerMessage::new(e.tick, payload));
        }
        self.cursor = self.session.log().len();
        let guidance = self.session.guidance();
        if guidance != self.guidance {
            self.guidance = guidance;
            out.push(ServerMessage::new(
                self.session.tick(),
                ServerPayload::Guidance { text: guidance.map(str::to_owned) },
            ));
        }
        out
    }
}
