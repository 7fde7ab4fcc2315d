//! Fixed-timestep drill sessions.
//!
//! Every call to [`DrillSession::step`] or [`DrillSession::advance`] covers
//! one tick of [`TICK_S`] seconds, in this order:
//!
//! 1. the trainee's command, if any, is applied at the start of the tick
//!    (events carry tick `t`);
//! 2. walking, the fire, cue perception and muster arrival are simulated
//!    over the tick (events carry tick `t + 1`, the moment they are observed);
//! 3. the tick counter advances.
//!
//! The session appends everything that happens to an event log. The log
//! contains every explicit command, so it can be replayed to reproduce the
//! final state hash exactly. Idle ticks (no command) are not logged.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fire::{Cue, FireState, Severity};
use crate::hash::{canonical_hash, fnv1a64};
use crate::layout::{CompartmentId, CompartmentKind, EquipmentId, EquipmentKind};
use crate::protocol::{
    next_required_task, phase_transition, settle, DrillError, DrillEvent, DrillPhase, Task,
    TaskChecklist,
};
use crate::scenario::{validate_scenario, Scenario, ValidationReport};
use crate::scoring::{score_session, ScoreError, ScoreReport};

pub const TICKS_PER_SECOND: u64 = 10;
pub const TICK_S: f64 = 1.0 / TICKS_PER_SECOND as f64;
pub const WALK_SPEED_M_S: f64 = 1.4;
/// Bumped whenever the simulation rules change; logs from another version
/// are refused by replay.
pub const ENGINE_VERSION: &str = "1";

const ARRIVAL_EPSILON_M: f64 = 1e-9;

pub fn ticks_to_seconds(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    MoveTo { target: CompartmentId },
    PickUp { equipment: EquipmentId },
    StartApply,
    StopApply,
    UsePhone,
    PullAlarm,
    Assess { severity: Severity },
    Evacuate,
    Wait,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::MoveTo { .. } => "move_to",
            Action::PickUp { .. } => "pick_up",
            Action::StartApply => "start_apply",
            Action::StopApply => "stop_apply",
            Action::UsePhone => "use_phone",
            Action::PullAlarm => "pull_alarm",
            Action::Assess { .. } => "assess",
            Action::Evacuate => "evacuate",
            Action::Wait => "wait",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub tick: u64,
    #[serde(flatten)]
    pub action: Action,
}

impl ActionCommand {
    pub fn new(tick: u64, action: Action) -> Self {
        Self { tick, action }
    }
}

/// Parses a command script: one JSON [`ActionCommand`] per line, blank
/// lines ignored. Ticks must be nondecreasing.
pub fn parse_script(text: &str) -> Result<Vec<ActionCommand>, ScriptError> {
    let mut out: Vec<ActionCommand> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cmd: ActionCommand = serde_json::from_str(line).map_err(|e| ScriptError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.last().is_some_and(|prev| prev.tick > cmd.tick) {
            return Err(ScriptError::Unordered { line: i + 1 });
        }
        out.push(cmd);
    }
    Ok(out)
}

pub fn script_to_jsonl(commands: &[ActionCommand]) -> String {
    commands
        .iter()
        .map(|c| serde_json::to_string(c).expect("command serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: command ticks must be nondecreasing")]
    Unordered { line: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transit {
    pub from: CompartmentId,
    pub to: CompartmentId,
    pub length_m: f64,
    pub traveled_m: f64,
}

impl Transit {
    pub fn progress(&self) -> f64 {
        (self.traveled_m / self.length_m).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraineeState {
    /// Current compartment; while walking, the one being left.
    pub compartment: CompartmentId,
    pub in_transit: Option<Transit>,
    /// Waypoints still to visit after the current passage.
    pub route: Vec<CompartmentId>,
    pub carrying_extinguisher: Option<EquipmentId>,
    pub applying_agent: bool,
}

impl TraineeState {
    fn at(compartment: CompartmentId) -> Self {
        Self {
            compartment,
            in_transit: None,
            route: Vec::new(),
            carrying_extinguisher: None,
            applying_agent: false,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.in_transit.is_some() || !self.route.is_empty()
    }

    /// Where the trainee will be once the current passage is finished.
    fn next_stop(&self) -> &CompartmentId {
        self.in_transit
            .as_ref()
            .map(|t| &t.to)
            .unwrap_or(&self.compartment)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotCoLocated,
    InTransit,
    UnknownTarget,
    NotPortable,
    AlreadyCarrying,
    NoExtinguisher,
    FireOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    TimeLimit,
    ScriptEnd,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted {
        scenario_id: String,
        seed: u64,
        engine_version: String,
    },
    Command {
        command: ActionCommand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rebased_from: Option<u64>,
    },
    Rejected {
        action: String,
        reason: RejectReason,
    },
    Departed {
        from: CompartmentId,
        to: CompartmentId,
    },
    Arrived {
        compartment: CompartmentId,
    },
    PickedUp {
        equipment: EquipmentId,
    },
    AgentStarted,
    AgentStopped {
        reason: String,
    },
    #[serde(rename = "cue")]
    CuesChanged {
        cues: BTreeSet<Cue>,
    },
    FireExtinguished,
    PhaseChanged {
        from: DrillPhase,
        to: DrillPhase,
    },
    #[serde(rename = "error")]
    ErrorLogged {
        error: DrillError,
    },
    TaskDone {
        task: Task,
    },
    SessionFinished {
        state_hash: String,
        total_ticks: u64,
        reason: FinishReason,
        /// Digest of every earlier log line and this event's other fields.
        /// Values that replay copies from the log (seed, rebase notes) are
        /// only checked through it.
        log_digest: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub tick: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub fn log_to_jsonl(events: &[SessionEvent]) -> String {
    events.iter().map(|e| e.to_json() + "\n").collect()
}

/// The command script equivalent to a logged session: every logged command
/// at its executed tick, plus a trailing `wait` so that [`run_script`]
/// reaches the same final tick when the session completed.
pub fn script_from_log(events: &[SessionEvent]) -> Vec<ActionCommand> {
    let mut cmds: Vec<ActionCommand> = events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Command { command, .. } => Some(command.clone()),
            _ => None,
        })
        .collect();
    let finished = events.iter().rev().find_map(|e| match e.kind {
        EventKind::SessionFinished { total_ticks, reason, .. } => Some((total_ticks, reason)),
        _ => None,
    });
    if let Some((total, FinishReason::Complete)) = finished {
        if total > 0 && cmds.last().is_none_or(|c| c.tick < total - 1) {
            cmds.push(ActionCommand::new(total - 1, Action::Wait));
        }
    }
    cmds
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("scenario failed validation")]
    ScenarioInvalid(ValidationReport),
    #[error("command for tick {command} sent at tick {session}")]
    TickMismatch { session: u64, command: u64 },
    #[error("session already finished")]
    SessionClosed,
}

/// Returned by a step for commands that could not be carried out. The
/// session continues; the rejection is also logged.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub rejected: Option<RejectReason>,
}

#[derive(Serialize)]
struct HashedState<'a> {
    tick: u64,
    trainee: &'a TraineeState,
    fire: &'a FireState,
    phase: DrillPhase,
    checklist: &'a TaskChecklist,
    errors: &'a [DrillError],
}

#[derive(Clone, Debug)]
pub struct DrillSession {
    scenario: Arc<Scenario>,
    tick: u64,
    trainee: TraineeState,
    fire: FireState,
    phase: DrillPhase,
    checklist: TaskChecklist,
    errors: Vec<DrillError>,
    log: Vec<SessionEvent>,
    rng_seed: u64,
    cues: BTreeSet<Cue>,
    finished: Option<FinishReason>,
}

impl DrillSession {
    /// Starts a session. The seed is recorded but no randomness is used yet.
    pub fn new(scenario: impl Into<Arc<Scenario>>, seed: u64) -> Result<Self, EngineError> {
        let scenario = scenario.into();
        let report = validate_scenario(&scenario);
        if !report.ok {
            return Err(EngineError::ScenarioInvalid(report));
        }
        let mut session = Self {
            trainee: TraineeState::at(scenario.trainee_start.clone()),
            fire: FireState::ignite(scenario.fire.clone()),
            scenario,
            tick: 0,
            phase: DrillPhase::Patrol,
            checklist: TaskChecklist::default(),
            errors: Vec::new(),
            log: Vec::new(),
            rng_seed: seed,
            cues: BTreeSet::new(),
            finished: None,
        };
        session.emit(
            0,
            EventKind::SessionStarted {
                scenario_id: session.scenario.id.clone(),
                seed,
                engine_version: ENGINE_VERSION.to_owned(),
            },
        );
        Ok(session)
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn elapsed_s(&self) -> f64 {
        ticks_to_seconds(self.tick)
    }

    pub fn trainee(&self) -> &TraineeState {
        &self.trainee
    }

    pub fn fire(&self) -> &FireState {
        &self.fire
    }

    pub fn phase(&self) -> DrillPhase {
        self.phase
    }

    pub fn checklist(&self) -> &TaskChecklist {
        &self.checklist
    }

    pub fn errors(&self) -> &[DrillError] {
        &self.errors
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn cues(&self) -> &BTreeSet<Cue> {
        &self.cues
    }

    pub fn finished(&self) -> Option<FinishReason> {
        self.finished
    }

    pub fn time_limit_reached(&self) -> bool {
        self.scenario
            .time_limit_s
            .is_some_and(|limit| self.elapsed_s() >= limit - 1e-9)
    }

    pub fn guidance(&self) -> Option<&'static str> {
        next_required_task(self.phase, &self.scenario.fire, self.scenario.guidance_enabled)
    }

    pub fn state_hash(&self) -> String {
        canonical_hash(&HashedState {
            tick: self.tick,
            trainee: &self.trainee,
            fire: &self.fire,
            phase: self.phase,
            checklist: &self.checklist,
            errors: &self.errors,
        })
    }

    /// Applies `command` (which must be for the current tick) and simulates one tick.
    pub fn step(&mut self, command: &ActionCommand) -> Result<StepOutcome, EngineError> {
        self.step_annotated(command, None)
    }

    /// Like [`DrillSession::step`], recording that the command was originally
    /// sent for `rebased_from` and moved to the current tick.
    pub fn step_annotated(
        &mut self,
        command: &ActionCommand,
        rebased_from: Option<u64>,
    ) -> Result<StepOutcome, EngineError> {
        if self.finished.is_some() {
            return Err(EngineError::SessionClosed);
        }
        if command.tick != self.tick {
            return Err(EngineError::TickMismatch {
                session: self.tick,
                command: command.tick,
            });
        }
        self.emit(
            self.tick,
            EventKind::Command {
                command: command.clone(),
                rebased_from,
            },
        );
        let rejected = self.apply_action(&command.action);
        if let Some(reason) = rejected {
            self.emit(
                self.tick,
                EventKind::Rejected {
                    action: command.action.name().to_owned(),
                    reason,
                },
            );
        }
        self.simulate();
        Ok(StepOutcome { rejected })
    }

    /// Simulates one tick with no trainee input.
    pub fn advance(&mut self) -> Result<(), EngineError> {
        if self.finished.is_some() {
            return Err(EngineError::SessionClosed);
        }
        self.simulate();
        Ok(())
    }

    /// Closes the session, appending the final `session_finished` event.
    pub fn finish(&mut self, reason: FinishReason) {
        if self.finished.is_some() {
            return;
        }
        let hash = self.state_hash();
        let mut text = log_to_jsonl(&self.log);
        text.push_str(&serde_json::json!([hash, self.tick, reason]).to_string());
        self.emit(
            self.tick,
            EventKind::SessionFinished {
                log_digest: format!("{:016x}", fnv1a64(text.as_bytes())),
                state_hash: hash,
                total_ticks: self.tick,
                reason,
            },
        );
        self.finished = Some(reason);
    }

    fn emit(&mut self, tick: u64, kind: EventKind) {
        let seq = self.log.len() as u64;
        self.log.push(SessionEvent { tick, seq, kind });
    }

    fn protocol(&mut self, event: DrillEvent, tick: u64) {
        let t = phase_transition(self.phase, &self.checklist, event, &self.scenario.fire, tick);
        for task in &t.completed_tasks {
            self.emit(tick, EventKind::TaskDone { task: *task });
        }
        for err in &t.errors {
            self.emit(tick, EventKind::ErrorLogged { error: err.clone() });
        }
        self.errors.extend(t.errors);
        self.checklist = t.checklist;
        self.change_phase(t.phase, tick);
        if let Some(next) = settle(self.phase) {
            self.change_phase(next, tick);
        }
    }

    fn change_phase(&mut self, to: DrillPhase, tick: u64) {
        if to != self.phase {
            let from = std::mem::replace(&mut self.phase, to);
            self.emit(tick, EventKind::PhaseChanged { from, to });
        }
    }

    fn stop_agent(&mut self, tick: u64, reason: &str) {
        if self.trainee.applying_agent {
            self.trainee.applying_agent = false;
            self.emit(tick, EventKind::AgentStopped { reason: reason.to_owned() });
        }
    }

    /// Equipment of `kind` in the trainee's compartment, when standing still.
    fn co_located(&self, kind: EquipmentKind) -> Result<EquipmentId, RejectReason> {
        if self.trainee.in_transit.is_some() {
            return Err(RejectReason::InTransit);
        }
        self.scenario
            .layout
            .equipment_in(&self.trainee.compartment, kind)
            .ok()
            .and_then(|ids| ids.into_iter().next())
            .ok_or(RejectReason::NotCoLocated)
    }

    fn apply_action(&mut self, action: &Action) -> Option<RejectReason> {
        let now = self.tick;
        match action {
            Action::Wait => None,
            Action::MoveTo { target } => {
                if !self.scenario.layout.contains(target) {
                    return Some(RejectReason::UnknownTarget);
                }
                self.stop_agent(now, "moved");
                let origin = self.trainee.next_stop().clone();
                let path = match self.scenario.layout.shortest_path(&origin, target) {
                    Ok(p) => p,
                    Err(_) => return Some(RejectReason::UnknownTarget),
                };
                self.trainee.route = path.into_iter().skip(1).collect();
                None
            }
            Action::PickUp { equipment } => {
                let item = match self.scenario.layout.equipment_item(equipment) {
                    Ok(item) => item.clone(),
                    Err(_) => return Some(RejectReason::UnknownTarget),
                };
                if self.trainee.in_transit.is_some() {
                    return Some(RejectReason::InTransit);
                }
                if item.compartment != self.trainee.compartment {
                    return Some(RejectReason::NotCoLocated);
                }
                if item.kind != EquipmentKind::Extinguisher {
                    return Some(RejectReason::NotPortable);
                }
                if self.trainee.carrying_extinguisher.is_some() {
                    return Some(RejectReason::AlreadyCarrying);
                }
                self.trainee.carrying_extinguisher = Some(item.id.clone());
                self.emit(now, EventKind::PickedUp { equipment: item.id });
                None
            }
            Action::StartApply => {
                if self.trainee.carrying_extinguisher.is_none() {
                    return Some(RejectReason::NoExtinguisher);
                }
                if self.trainee.in_transit.is_some() || !self.trainee.route.is_empty() {
                    return Some(RejectReason::InTransit);
                }
                if !self.fire.is_burning() {
                    return Some(RejectReason::FireOut);
                }
                if self.trainee.applying_agent {
                    return None;
                }
                if self.phase != DrillPhase::Suppressing {
                    let before = self.errors.len();
                    self.protocol(DrillEvent::BeginSuppression, now);
                    // Agent only flows once the procedure reaches suppression.
                    if self.phase != DrillPhase::Suppressing {
                        debug_assert!(self.errors.len() > before);
                        return None;
                    }
                }
                self.trainee.applying_agent = true;
                self.emit(now, EventKind::AgentStarted);
                None
            }
            Action::StopApply => {
                self.stop_agent(now, "stopped");
                None
            }
            Action::UsePhone => match self.co_located(EquipmentKind::EmergencyPhone) {
                Ok(_) => {
                    self.protocol(DrillEvent::ReportViaPhone, now);
                    None
                }
                Err(r) => Some(r),
            },
            Action::PullAlarm => match self.co_located(EquipmentKind::AlarmCallPoint) {
                Ok(_) => {
                    self.protocol(DrillEvent::ActivateAlarm, now);
                    None
                }
                Err(r) => Some(r),
            },
            Action::Assess { severity } => {
                self.protocol(DrillEvent::SubmitAssessment { severity: *severity }, now);
                None
            }
            Action::Evacuate => {
                self.stop_agent(now, "evacuating");
                let origin = self.trainee.next_stop().clone();
                match self.scenario.layout.shortest_escape_route(&origin) {
                    Ok(route) => self.trainee.route = route.into_iter().skip(1).collect(),
                    Err(_) => return Some(RejectReason::UnknownTarget),
                }
                if self.phase != DrillPhase::Evacuating {
                    self.protocol(DrillEvent::BeginEvacuation, now);
                }
                None
            }
        }
    }

    fn simulate(&mut self) {
        let start = self.tick;
        let end = start + 1;
        self.walk(start, end);

        if self.fire.is_burning() {
            let applying = self.trainee.applying_agent;
            self.fire = self
                .fire
                .tick(TICK_S, applying, &self.trainee.compartment)
                .expect("burning fire with a positive timestep");
            if !self.fire.is_burning() {
                self.emit(end, EventKind::FireExtinguished);
                self.stop_agent(end, "fire_out");
                self.protocol(DrillEvent::FireExtinguished, end);
            }
        }

        let cues = self
            .fire
            .cues_at(&self.scenario.layout, &self.trainee.compartment)
            .expect("trainee stays inside the layout");
        if cues != self.cues {
            self.cues = cues.clone();
            self.emit(end, EventKind::CuesChanged { cues: cues.clone() });
        }
        if self.phase == DrillPhase::Patrol && !cues.is_empty() {
            self.protocol(DrillEvent::PerceiveCue, end);
        }

        if self.phase == DrillPhase::Evacuating && !self.trainee.is_moving() {
            let at_muster = self
                .scenario
                .layout
                .compartment(&self.trainee.compartment)
                .is_ok_and(|c| c.kind == CompartmentKind::MusterArea);
            if at_muster {
                self.protocol(DrillEvent::ArriveAtMuster, end);
            }
        }

        self.tick = end;
    }

    fn walk(&mut self, start: u64, end: u64) {
        if self.trainee.in_transit.is_none() && !self.trainee.route.is_empty() {
            let to = self.trainee.route.remove(0);
            let from = self.trainee.compartment.clone();
            let length_m = self
                .scenario
                .layout
                .passage_between(&from, &to)
                .map(|p| p.length_m)
                .expect("routes follow passages");
            self.trainee.in_transit = Some(Transit {
                from: from.clone(),
                to: to.clone(),
                length_m,
                traveled_m: 0.0,
            });
            self.emit(start, EventKind::Departed { from, to });
        }
        let Some(transit) = self.trainee.in_transit.as_mut() else {
            return;
        };
        transit.traveled_m += WALK_SPEED_M_S * TICK_S;
        if transit.traveled_m + ARRIVAL_EPSILON_M >= transit.length_m {
            let to = transit.to.clone();
            self.trainee.in_transit = None;
            self.trainee.compartment = to.clone();
            self.emit(end, EventKind::Arrived { compartment: to });
        }
    }

    /// Read-only view for clients.
    pub fn snapshot(&self) -> SessionSnapshot {
        // The fire's whereabouts are only revealed once it has been found.
        let fire = self.checklist.discovered.then(|| FireView {
            compartment: self.fire.spec.compartment.clone(),
            intensity: self.fire.intensity,
            remaining_work_s: self.fire.remaining_work_s,
            extinguishable_progress: self.fire.spec.extinguishable.then(|| {
                1.0 - self.fire.remaining_work_s / self.fire.spec.extinguish_work_s
            }),
            status: self.fire.status,
        });
        SessionSnapshot {
            scenario_id: self.scenario.id.clone(),
            tick: self.tick,
            time_s: self.elapsed_s(),
            phase: self.phase,
            trainee: self.trainee.clone(),
            progress: self.trainee.in_transit.as_ref().map(Transit::progress),
            cues: self.cues.clone(),
            fire,
            checklist: self.checklist,
            errors: self.errors.clone(),
            guidance: self.guidance().map(str::to_owned),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireView {
    pub compartment: CompartmentId,
    pub intensity: f64,
    pub remaining_work_s: f64,
    /// Fraction of the extinguishing work done; absent for fires that
    /// cannot be put out.
    pub extinguishable_progress: Option<f64>,
    pub status: crate::fire::FireStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub scenario_id: String,
    pub tick: u64,
    pub time_s: f64,
    pub phase: DrillPhase,
    pub trainee: TraineeState,
    pub progress: Option<f64>,
    pub cues: BTreeSet<Cue>,
    pub fire: Option<FireView>,
    pub checklist: TaskChecklist,
    pub errors: Vec<DrillError>,
    pub guidance: Option<String>,
}

pub fn new_session(scenario: impl Into<Arc<Scenario>>, seed: u64) -> Result<DrillSession, EngineError> {
    DrillSession::new(scenario, seed)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Runs a command script to completion, the time limit, or the last command.
///
/// Gaps between command ticks are filled with idle ticks. The run stops
/// before the next command once the drill is complete or out of time, and
/// right after the last command otherwise.
pub fn run_script(
    scenario: impl Into<Arc<Scenario>>,
    commands: &[ActionCommand],
    seed: u64,
) -> Result<(DrillSession, ScoreReport), RunError> {
    let mut session = DrillSession::new(scenario, seed)?;
    let mut pending = commands.iter().peekable();
    let reason = loop {
        if session.phase() == DrillPhase::Complete {
            break FinishReason::Complete;
        }
        if session.time_limit_reached() {
            break FinishReason::TimeLimit;
        }
        match pending.peek() {
            None => break FinishReason::ScriptEnd,
            Some(cmd) if cmd.tick == session.tick() => {
                session.step(cmd)?;
                pending.next();
            }
            Some(cmd) if cmd.tick > session.tick() => session.advance()?,
            Some(cmd) => {
                return Err(EngineError::TickMismatch {
                    session: session.tick(),
                    command: cmd.tick,
                }
                .into())
            }
        }
    };
    session.finish(reason);
    let score = score_session(&session)?;
    Ok((session, score))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("replay diverged from the log at tick {tick}")]
    ReplayDivergence { tick: u64 },
    #[error("log is incompatible: {0}")]
    IncompatibleLog(String),
    #[error("malformed log line {line}: {message}")]
    MalformedLog { line: usize, message: String },
}

pub fn parse_log(text: &str) -> Result<Vec<SessionEvent>, ReplayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReplayError::MalformedLog {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Re-executes the commands recorded in `log` and checks that the
/// regenerated log matches event for event, including the final state hash.
pub fn replay(log: &[SessionEvent], scenario: impl Into<Arc<Scenario>>) -> Result<DrillSession, ReplayError> {
    let scenario = scenario.into();
    let (seed, version, scenario_id) = match log.first().map(|e| &e.kind) {
        Some(EventKind::SessionStarted { seed, engine_version, scenario_id }) => {
            (*seed, engine_version.clone(), scenario_id.clone())
        }
        _ => return Err(ReplayError::IncompatibleLog("log does not begin with session_started".into())),
    };
    if version != ENGINE_VERSION {
        return Err(ReplayError::IncompatibleLog(format!(
            "log written by engine version {version}, this is {ENGINE_VERSION}"
        )));
    }
    if scenario_id != scenario.id {
        return Err(ReplayError::IncompatibleLog(format!(
            "log is for scenario {scenario_id}, replaying against {}",
            scenario.id
        )));
    }
    let (total_ticks, reason) = match log.last().map(|e| &e.kind) {
        Some(EventKind::SessionFinished { total_ticks, reason, .. }) => (*total_ticks, *reason),
        _ => return Err(ReplayError::IncompatibleLog("log does not end with session_finished".into())),
    };

    let mut session = DrillSession::new(scenario, seed)
        .map_err(|e| ReplayError::IncompatibleLog(e.to_string()))?;
    let diverged = |session: &DrillSession| ReplayError::ReplayDivergence {
        tick: first_divergence(log, session.log()).unwrap_or(session.tick()),
    };
    for event in log {
        let EventKind::Command { command, rebased_from } = &event.kind else {
            continue;
        };
        if command.tick < session.tick() || command.tick > total_ticks {
            return Err(diverged(&session));
        }
        while session.tick() < command.tick {
            session.advance().map_err(|_| diverged(&session))?;
        }
        session
            .step_annotated(command, *rebased_from)
            .map_err(|_| diverged(&session))?;
    }
    while session.tick() < total_ticks {
        session.advance().map_err(|_| diverged(&session))?;
    }
    session.finish(reason);
    if let Some(tick) = first_divergence(log, session.log()) {
        return Err(ReplayError::ReplayDivergence { tick });
    }
    Ok(session)
}

/// Byte-level variant of [`replay`]: the regenerated log must reproduce the
/// original text line for line.
pub fn replay_text(text: &str, scenario: impl Into<Arc<Scenario>>) -> Result<DrillSession, ReplayError> {
    let events = parse_log(text)?;
    let session = replay(&events, scenario)?;
    let regenerated = log_to_jsonl(session.log());
    if regenerated != text {
        let tick = text
            .lines()
            .zip(regenerated.lines())
            .zip(&events)
            .find(|((a, b), _)| a != b)
            .map(|(_, e)| e.tick)
            .unwrap_or(session.tick());
        return Err(ReplayError::ReplayDivergence { tick });
    }
    Ok(session)
}

fn first_divergence(original: &[SessionEvent], regenerated: &[SessionEvent]) -> Option<u64> {
    for (a, b) in original.iter().zip(regenerated) {
        if a != b {
            return Some(a.tick.min(b.tick));
        }
    }
    match original.len().cmp(&regenerated.len()) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Less => Some(regenerated[original.len()].tick),
        std::cmp::Ordering::Greater => Some(original[regenerated.len()].tick),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Compartment, Equipment, LayoutDoc, ShipLayout};
    use crate::protocol::DrillErrorKind;
    use crate::scenario::builtin_level;

    fn cmd(tick: u64, action: Action) -> ActionCommand {
        ActionCommand::new(tick, action)
    }

    /// L1 with the trainee starting next to the galley.
    fn l1_from(start: &str) -> Scenario {
        let mut s = builtin_level("L1").unwrap();
        s.trainee_start = start.into();
        s
    }

    #[test]
    fn new_session_starts_in_patrol() {
        let s = DrillSession::new(builtin_level("L1").unwrap(), 0).unwrap();
        assert_eq!(s.tick(), 0);
        assert_eq!(s.phase(), DrillPhase::Patrol);
        assert_eq!(s.trainee().compartment, "bridge".into());
        assert!(s.fire().is_burning());
        assert_eq!(s.fire().spec.compartment, "galley".into());
        assert_eq!(s.log().len(), 1);
        assert!(matches!(
            &s.log()[0].kind,
            EventKind::SessionStarted { scenario_id, seed: 0, .. } if scenario_id == "L1"
        ));

        let l4 = DrillSession::new(builtin_level("L4").unwrap(), 99).unwrap();
        assert!(!l4.fire().spec.extinguishable);
    }

    #[test]
    fn invalid_scenario_is_refused() {
        let mut s = builtin_level("L1").unwrap();
        let mut doc: LayoutDoc = s.layout.clone().into();
        doc.compartments.retain(|c: &Compartment| c.kind != CompartmentKind::MusterArea);
        doc.passages.retain(|p| p.from.as_str() != "muster_station" && p.to.as_str() != "muster_station");
        s.layout = ShipLayout::try_from(doc).unwrap();
        assert!(matches!(DrillSession::new(s, 0), Err(EngineError::ScenarioInvalid(_))));
    }

    #[test]
    fn standing_in_the_fire_compartment_discovers_it() {
        let mut s = builtin_level("L1").unwrap();
        s.trainee_start = "mess_room".into();
        let mut session = DrillSession::new(s, 0).unwrap();
        // Mess room is one passage from the galley: auditory only.
        session.step(&cmd(0, Action::Wait)).unwrap();
        assert_eq!(session.phase(), DrillPhase::FireDiscovered);
        assert_eq!(session.cues(), &BTreeSet::from([Cue::Auditory]));
    }

    #[test]
    fn visual_cue_in_fire_compartment() {
        // Start in the corridor, walk into the galley and look.
        let mut session = DrillSession::new(l1_from("corridor"), 0).unwrap();
        session.step(&cmd(0, Action::MoveTo { target: "galley".into() })).unwrap();
        while session.trainee().is_moving() {
            session.advance().unwrap();
        }
        assert_eq!(session.trainee().compartment, "galley".into());
        assert!(session.cues().contains(&Cue::Visual));
        assert_eq!(session.phase(), DrillPhase::FireDiscovered);
    }

    #[test]
    fn alarm_pull_needs_co_location_and_advances_phase() {
        let mut session = DrillSession::new(l1_from("corridor"), 0).unwrap();
        session.step(&cmd(0, Action::Wait)).unwrap();
        assert_eq!(session.phase(), DrillPhase::FireDiscovered);
        session.step(&cmd(1, Action::UsePhone)).unwrap();
        assert_eq!(session.phase(), DrillPhase::Reported);
        session.step(&cmd(2, Action::PullAlarm)).unwrap();
        assert_eq!(session.phase(), DrillPhase::AlarmRaised);
        assert!(session.errors().is_empty());
    }

    #[test]
    fn pick_up_far_away_is_a_logged_no_op() {
        let mut session = DrillSession::new(builtin_level("L1").unwrap(), 0).unwrap();
        let hash_before = session.state_hash();
        let out = session
            .step(&cmd(0, Action::PickUp { equipment: "ext_galley".into() }))
            .unwrap();
        assert_eq!(out.rejected, Some(RejectReason::NotCoLocated));
        assert!(session.trainee().carrying_extinguisher.is_none());
        assert!(session.errors().is_empty());
        assert!(session.log().iter().any(|e| matches!(
            e.kind,
            EventKind::Rejected { reason: RejectReason::NotCoLocated, .. }
        )));
        assert_ne!(hash_before, session.state_hash());
    }

    #[test]
    fn tick_mismatch_is_an_error() {
        let mut session = DrillSession::new(builtin_level("L1").unwrap(), 0).unwrap();
        assert_eq!(
            session.step(&cmd(3, Action::Wait)),
            Err(EngineError::TickMismatch { session: 0, command: 3 })
        );
    }

    #[test]
    fn walking_takes_ceil_length_over_stride_ticks() {
        // bridge -> stairwell is 10 m; 1.4 m/s * 0.1 s = 0.14 m per tick.
        let mut session = DrillSession::new(builtin_level("L1").unwrap(), 0).unwrap();
        session.step(&cmd(0, Action::MoveTo { target: "stairwell".into() })).unwrap();
        let mut ticks = 1;
        while session.trainee().is_moving() {
            session.advance().unwrap();
            ticks += 1;
        }
        assert_eq!(ticks, (10.0f64 / 0.14).ceil() as u64);
    }

    #[test]
    fn applying_agent_needs_an_assessed_fire() {
        let mut session = DrillSession::new(l1_from("corridor"), 0).unwrap();
        session.step(&cmd(0, Action::PickUp { equipment: "ext_corridor".into() })).unwrap();
        session.step(&cmd(1, Action::StartApply)).unwrap();
        assert!(!session.trainee().applying_agent);
        let kinds: Vec<_> = session.errors().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![DrillErrorKind::ActionOutOfPhase]);
    }

    #[test]
    fn start_apply_without_extinguisher_is_rejected() {
        let mut session = DrillSession::new(l1_from("corridor"), 0).unwrap();
        let out = session.step(&cmd(0, Action::StartApply)).unwrap();
        assert_eq!(out.rejected, Some(RejectReason::NoExtinguisher));
    }

    #[test]
    fn phones_are_not_portable() {
        let mut session = DrillSession::new(l1_from("corridor"), 0).unwrap();
        let out = session
            .step(&cmd(0, Action::PickUp { equipment: "phone_corridor".into() }))
            .unwrap();
        assert_eq!(out.rejected, Some(RejectReason::NotPortable));
    }

    #[test]
    fn script_parsing_checks_order() {
        let ok = "{\"tick\":0,\"action\":\"wait\"}\n\n{\"tick\":4,\"action\":\"move_to\",\"target\":\"galley\"}\n";
        let cmds = parse_script(ok).unwrap();
        assert_eq!(cmds[1], cmd(4, Action::MoveTo { target: "galley".into() }));
        assert_eq!(script_to_jsonl(&cmds), ok.replace("\n\n", "\n"));
        let bad = "{\"tick\":5,\"action\":\"wait\"}\n{\"tick\":4,\"action\":\"wait\"}\n";
        assert_eq!(parse_script(bad), Err(ScriptError::Unordered { line: 2 }));
        assert!(matches!(parse_script("{\"tick\":0,\"action\":\"fly\"}"), Err(ScriptError::Syntax { line: 1, .. })));
    }

    #[test]
    fn duplicate_tick_commands_are_a_tick_mismatch() {
        let s = builtin_level("L1").unwrap();
        let err = run_script(s, &[cmd(2, Action::Wait), cmd(2, Action::Wait)], 0).unwrap_err();
        assert!(matches!(err, RunError::Engine(EngineError::TickMismatch { session: 3, command: 2 })));
    }

    #[test]
    fn empty_script_ends_immediately() {
        let (session, score) = run_script(builtin_level("L1").unwrap(), &[], 0).unwrap();
        assert_eq!(session.tick(), 0);
        assert_eq!(session.phase(), DrillPhase::Patrol);
        assert!(session.checklist().all_false());
        assert_eq!(score.total_time_s, 0.0);
        assert!(!score.completed);
    }

    #[test]
    fn time_limit_stops_the_run() {
        let mut s = builtin_level("L1").unwrap();
        s.time_limit_s = Some(2.0);
        let (session, _) = run_script(s, &[cmd(500, Action::Wait)], 0).unwrap();
        assert_eq!(session.tick(), 20);
        assert_eq!(session.finished(), Some(FinishReason::TimeLimit));
    }

    #[test]
    fn equipment_placement_is_consistent() {
        // Guards the assumptions the tests above make about the shipped layout.
        let l = builtin_level("L1").unwrap().layout;
        let find = |id: &str| -> &Equipment { l.equipment().iter().find(|e| e.id.as_str() == id).unwrap() };
        assert_eq!(find("ext_corridor").compartment, "corridor".into());
        assert_eq!(find("phone_corridor").compartment, "corridor".into());
    }
}
