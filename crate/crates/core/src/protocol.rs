//! The drill procedure as an explicit phase machine.
//!
//! Legal progression:
//!
//! ```text
//! patrol -> fire_discovered -> reported -> alarm_raised -> severity_assessed
//!   severity_assessed -> suppressing -> evacuating      (begin_suppression, fire_extinguished)
//!   severity_assessed -> evacuating                     (begin_evacuation)
//!   suppressing       -> evacuating                     (begin_evacuation, abandoning suppression)
//!   evacuating -> at_muster -> complete
//! ```
//!
//! Mistakes are recorded as [`DrillError`]s rather than rejected, so a
//! trainee can make the wrong call and live with the consequences. Events
//! with no edge from the current phase leave the phase untouched and record
//! `action_out_of_phase`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fire::{severity_class, FireSpec, Severity};
use crate::messages;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrillPhase {
    Patrol,
    FireDiscovered,
    Reported,
    AlarmRaised,
    SeverityAssessed,
    Suppressing,
    Evacuating,
    AtMuster,
    Complete,
}

impl DrillPhase {
    pub const ALL: [DrillPhase; 9] = [
        DrillPhase::Patrol,
        DrillPhase::FireDiscovered,
        DrillPhase::Reported,
        DrillPhase::AlarmRaised,
        DrillPhase::SeverityAssessed,
        DrillPhase::Suppressing,
        DrillPhase::Evacuating,
        DrillPhase::AtMuster,
        DrillPhase::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DrillPhase::Patrol => "patrol",
            DrillPhase::FireDiscovered => "fire_discovered",
            DrillPhase::Reported => "reported",
            DrillPhase::AlarmRaised => "alarm_raised",
            DrillPhase::SeverityAssessed => "severity_assessed",
            DrillPhase::Suppressing => "suppressing",
            DrillPhase::Evacuating => "evacuating",
            DrillPhase::AtMuster => "at_muster",
            DrillPhase::Complete => "complete",
        }
    }
}

impl fmt::Display for DrillPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Protocol-level happenings fed to the phase machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DrillEvent {
    PerceiveCue,
    ReportViaPhone,
    ActivateAlarm,
    SubmitAssessment { severity: Severity },
    BeginSuppression,
    FireExtinguished,
    BeginEvacuation,
    ArriveAtMuster,
}

impl DrillEvent {
    pub fn name(&self) -> &'static str {
        match self {
            DrillEvent::PerceiveCue => "perceive_cue",
            DrillEvent::ReportViaPhone => "report_via_phone",
            DrillEvent::ActivateAlarm => "activate_alarm",
            DrillEvent::SubmitAssessment { .. } => "submit_assessment",
            DrillEvent::BeginSuppression => "begin_suppression",
            DrillEvent::FireExtinguished => "fire_extinguished",
            DrillEvent::BeginEvacuation => "begin_evacuation",
            DrillEvent::ArriveAtMuster => "arrive_at_muster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid drill event `{0}`")]
    InvalidEvent(String),
}

impl FromStr for DrillEvent {
    type Err = ProtocolError;

    /// Accepts the event names, with `submit_assessment(controllable)` /
    /// `submit_assessment(imminent_threat)` for assessments.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let ev = match s {
            "perceive_cue" => DrillEvent::PerceiveCue,
            "report_via_phone" => DrillEvent::ReportViaPhone,
            "activate_alarm" => DrillEvent::ActivateAlarm,
            "begin_suppression" => DrillEvent::BeginSuppression,
            "fire_extinguished" => DrillEvent::FireExtinguished,
            "begin_evacuation" => DrillEvent::BeginEvacuation,
            "arrive_at_muster" => DrillEvent::ArriveAtMuster,
            "submit_assessment(controllable)" => DrillEvent::SubmitAssessment {
                severity: Severity::Controllable,
            },
            "submit_assessment(imminent_threat)" => DrillEvent::SubmitAssessment {
                severity: Severity::ImminentThreat,
            },
            _ => return Err(ProtocolError::InvalidEvent(s.to_owned())),
        };
        Ok(ev)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrillErrorKind {
    ExtinguishAttemptOnImminentFire,
    PrematureEvacuation,
    AlarmBeforeReport,
    ActionOutOfPhase,
}

impl DrillErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DrillErrorKind::ExtinguishAttemptOnImminentFire => "extinguish_attempt_on_imminent_fire",
            DrillErrorKind::PrematureEvacuation => "premature_evacuation",
            DrillErrorKind::AlarmBeforeReport => "alarm_before_report",
            DrillErrorKind::ActionOutOfPhase => "action_out_of_phase",
        }
    }

    /// Plain-language description from the message catalog.
    pub fn describe(self) -> &'static str {
        messages::lookup(&format!("error.{}", self.as_str())).unwrap_or("")
    }
}

impl fmt::Display for DrillErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrillError {
    pub kind: DrillErrorKind,
    pub tick: u64,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Discovered,
    Reported,
    AlarmRaised,
    Assessed,
    AssessmentCorrect,
    SuppressionDoneOrCorrectlySkipped,
    Mustered,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Discovered,
        Task::Reported,
        Task::AlarmRaised,
        Task::Assessed,
        Task::AssessmentCorrect,
        Task::SuppressionDoneOrCorrectlySkipped,
        Task::Mustered,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Discovered => "discovered",
            Task::Reported => "reported",
            Task::AlarmRaised => "alarm_raised",
            Task::Assessed => "assessed",
            Task::AssessmentCorrect => "assessment_correct",
            Task::SuppressionDoneOrCorrectlySkipped => "suppression_done_or_correctly_skipped",
            Task::Mustered => "mustered",
        }
    }

    pub fn describe(self) -> &'static str {
        messages::lookup(&format!("task.{}", self.as_str())).unwrap_or("")
    }
}

/// Task flags. Each flag only ever goes from false to true.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskChecklist {
    pub discovered: bool,
    pub reported: bool,
    pub alarm_raised: bool,
    pub assessed: bool,
    pub assessment_correct: bool,
    pub suppression_done_or_correctly_skipped: bool,
    pub mustered: bool,
}

impl TaskChecklist {
    pub fn get(&self, task: Task) -> bool {
        match task {
            Task::Discovered => self.discovered,
            Task::Reported => self.reported,
            Task::AlarmRaised => self.alarm_raised,
            Task::Assessed => self.assessed,
            Task::AssessmentCorrect => self.assessment_correct,
            Task::SuppressionDoneOrCorrectlySkipped => self.suppression_done_or_correctly_skipped,
            Task::Mustered => self.mustered,
        }
    }

    /// Sets a flag; returns true if it was previously unset.
    pub fn mark(&mut self, task: Task) -> bool {
        let slot = match task {
            Task::Discovered => &mut self.discovered,
            Task::Reported => &mut self.reported,
            Task::AlarmRaised => &mut self.alarm_raised,
            Task::Assessed => &mut self.assessed,
            Task::AssessmentCorrect => &mut self.assessment_correct,
            Task::SuppressionDoneOrCorrectlySkipped => &mut self.suppression_done_or_correctly_skipped,
            Task::Mustered => &mut self.mustered,
        };
        !std::mem::replace(slot, true)
    }

    pub fn all_false(&self) -> bool {
        *self == TaskChecklist::default()
    }
}

/// Outcome of feeding one event to the phase machine.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub phase: DrillPhase,
    pub checklist: TaskChecklist,
    pub errors: Vec<DrillError>,
    /// Checklist flags that flipped to true on this transition, in order.
    pub completed_tasks: Vec<Task>,
}

/// Pure transition function of the drill procedure.
///
/// `checklist` disambiguates the one order-sensitive case: after an alarm
/// raised before reporting, the phone report is still owed and is accepted
/// in `alarm_raised`, and assessment waits until it is made.
pub fn phase_transition(
    phase: DrillPhase,
    checklist: &TaskChecklist,
    event: DrillEvent,
    truth: &FireSpec,
    tick: u64,
) -> Transition {
    use DrillPhase as P;
    use DrillEvent as E;

    let severity = severity_class(truth);
    let mut out = Transition {
        phase,
        checklist: *checklist,
        errors: Vec::new(),
        completed_tasks: Vec::new(),
    };
    let mark = |out: &mut Transition, task: Task| {
        if out.checklist.mark(task) {
            out.completed_tasks.push(task);
        }
    };
    let error = |kind: DrillErrorKind, detail: String| DrillError { kind, tick, detail };

    match (phase, event) {
        (P::Patrol, E::PerceiveCue) => {
            out.phase = P::FireDiscovered;
            mark(&mut out, Task::Discovered);
        }
        (P::FireDiscovered, E::ReportViaPhone) => {
            out.phase = P::Reported;
            mark(&mut out, Task::Reported);
        }
        (P::AlarmRaised, E::ReportViaPhone) if !checklist.reported => {
            mark(&mut out, Task::Reported);
        }
        (P::Reported, E::ActivateAlarm) => {
            out.phase = P::AlarmRaised;
            mark(&mut out, Task::AlarmRaised);
        }
        (P::FireDiscovered, E::ActivateAlarm) => {
            out.phase = P::AlarmRaised;
            mark(&mut out, Task::AlarmRaised);
            out.errors.push(error(
                DrillErrorKind::AlarmBeforeReport,
                "alarm activated before the ship master was informed".into(),
            ));
        }
        (P::AlarmRaised, E::SubmitAssessment { severity: submitted }) if checklist.reported => {
            out.phase = P::SeverityAssessed;
            mark(&mut out, Task::Assessed);
            if assessment_verdict(submitted, truth) {
                mark(&mut out, Task::AssessmentCorrect);
            }
        }
        (P::SeverityAssessed, E::BeginSuppression) => {
            out.phase = P::Suppressing;
            if severity == Severity::ImminentThreat {
                out.errors.push(error(
                    DrillErrorKind::ExtinguishAttemptOnImminentFire,
                    format!("suppression started on an inextinguishable fire in {}", truth.compartment),
                ));
            }
        }
        (P::Suppressing, E::FireExtinguished) => {
            out.phase = P::Evacuating;
            mark(&mut out, Task::SuppressionDoneOrCorrectlySkipped);
        }
        (P::SeverityAssessed | P::Suppressing, E::BeginEvacuation) => {
            out.phase = P::Evacuating;
            match (severity, phase) {
                (Severity::Controllable, _) => out.errors.push(error(
                    DrillErrorKind::PrematureEvacuation,
                    format!("evacuated while the fire in {} was still controllable", truth.compartment),
                )),
                (Severity::ImminentThreat, P::SeverityAssessed) => {
                    mark(&mut out, Task::SuppressionDoneOrCorrectlySkipped)
                }
                _ => {}
            }
        }
        (P::Evacuating, E::ArriveAtMuster) => {
            out.phase = P::AtMuster;
            mark(&mut out, Task::Mustered);
        }
        (_, ev) => {
            out.errors.push(error(
                DrillErrorKind::ActionOutOfPhase,
                format!("{} during {}", ev.name(), phase),
            ));
        }
    }
    out
}

/// Follow-up transition that needs no trainee input.
pub fn settle(phase: DrillPhase) -> Option<DrillPhase> {
    match phase {
        DrillPhase::AtMuster => Some(DrillPhase::Complete),
        _ => None,
    }
}

pub fn assessment_verdict(submitted: Severity, spec: &FireSpec) -> bool {
    submitted == severity_class(spec)
}

/// Hint for the next required step, or `None` when guidance is off.
pub fn next_required_task(
    phase: DrillPhase,
    spec: &FireSpec,
    guidance_enabled: bool,
) -> Option<&'static str> {
    if !guidance_enabled {
        return None;
    }
    let key = match phase {
        DrillPhase::SeverityAssessed | DrillPhase::Suppressing => {
            format!("hint.{}.{}", phase, severity_class(spec))
        }
        _ => format!("hint.{phase}"),
    };
    messages::lookup(&key)
}
