//! Goal-driven scripted trainees.
//!
//! An agent works through a list of [`Goal`]s against a live session and
//! records the commands it issued. The recorded script, fed to
//! [`run_script`](crate::engine::run_script), reproduces the same session.

use std::sync::Arc;

use thiserror::Error;

use crate::engine::{Action, ActionCommand, DrillSession, EngineError, RejectReason};
use crate::fire::Severity;
use crate::layout::{CompartmentId, EquipmentId};
use crate::protocol::DrillPhase;
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub enum Goal {
    /// Walk to a compartment and wait until standing in it.
    MoveTo(CompartmentId),
    /// Idle until the drill has reached at least this phase.
    WaitForPhase(DrillPhase),
    WaitTicks(u64),
    WaitForFireOut,
    /// Issue a single command.
    Act(Action),
    WaitForCompletion,
}

impl Goal {
    pub fn move_to(c: &str) -> Self {
        Goal::MoveTo(c.into())
    }

    pub fn pick_up(e: &str) -> Self {
        Goal::Act(Action::PickUp {
            equipment: EquipmentId::from(e),
        })
    }

    pub fn assess(severity: Severity) -> Self {
        Goal::Act(Action::Assess { severity })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("goal {goal} ({action}) was rejected: {reason:?}")]
    Rejected {
        goal: usize,
        action: &'static str,
        reason: RejectReason,
    },
    #[error("goal {goal} not reached by tick {tick}")]
    Stuck { goal: usize, tick: u64 },
}

/// Upper bound on simulated ticks per agent run (one hour of drill time).
pub const MAX_AGENT_TICKS: u64 = 36_000;

/// Plays `goals` against a fresh session and returns the command script.
///
/// When the drill completes after the last issued command, a trailing `wait`
/// one tick before completion is appended so that a script run stops at the
/// same tick.
pub fn drive(
    scenario: impl Into<Arc<Scenario>>,
    goals: &[Goal],
    seed: u64,
) -> Result<Vec<ActionCommand>, AgentError> {
    let mut session = DrillSession::new(scenario, seed)?;
    let mut commands = Vec::new();

    let mut issue = |session: &mut DrillSession, goal: usize, action: Action| -> Result<(), AgentError> {
        let cmd = ActionCommand::new(session.tick(), action);
        let out = session.step(&cmd)?;
        if let Some(reason) = out.rejected {
            return Err(AgentError::Rejected {
                goal,
                action: cmd.action.name(),
                reason,
            });
        }
        commands.push(cmd);
        Ok(())
    };

    for (i, goal) in goals.iter().enumerate() {
        let idle_until = |session: &mut DrillSession, done: &dyn Fn(&DrillSession) -> bool| {
            while !done(session) {
                if session.tick() >= MAX_AGENT_TICKS {
                    return Err(AgentError::Stuck { goal: i, tick: session.tick() });
                }
                session.advance()?;
            }
            Ok(())
        };
        match goal {
            Goal::MoveTo(target) => {
                issue(&mut session, i, Action::MoveTo { target: target.clone() })?;
                let target = target.clone();
                idle_until(&mut session, &move |s| {
                    !s.trainee().is_moving() && s.trainee().compartment == target
                })?;
            }
            Goal::WaitForPhase(phase) => {
                let phase = *phase;
                idle_until(&mut session, &move |s| s.phase() >= phase)?;
            }
            Goal::WaitTicks(n) => {
                let until = session.tick() + n;
                idle_until(&mut session, &move |s| s.tick() >= until)?;
            }
            Goal::WaitForFireOut => idle_until(&mut session, &|s| !s.fire().is_burning())?,
            Goal::Act(action) => issue(&mut session, i, action.clone())?,
            Goal::WaitForCompletion => {
                idle_until(&mut session, &|s| s.phase() == DrillPhase::Complete)?
            }
        }
    }

    if session.phase() == DrillPhase::Complete {
        let last = commands.last().map(|c| c.tick);
        let end = session.tick() - 1;
        if last.is_none_or(|t| t < end) {
            commands.push(ActionCommand::new(end, Action::Wait));
        }
    }
    Ok(commands)
}

fn report_and_alarm(goals: &mut Vec<Goal>) {
    goals.extend([
        Goal::WaitForPhase(DrillPhase::FireDiscovered),
        Goal::move_to("corridor"),
        Goal::Act(Action::UsePhone),
        Goal::Act(Action::PullAlarm),
    ]);
}

/// Correct procedure for the built-in levels.
pub fn happy_path(level: &str) -> Option<Vec<Goal>> {
    let mut goals = Vec::new();
    match level {
        "L1" | "L2" => goals.push(Goal::move_to("stairwell")),
        "L3" | "L4" => goals.push(Goal::move_to("corridor")),
        _ => return None,
    }
    report_and_alarm(&mut goals);
    match level {
        "L1" | "L3" => {
            let fire = if level == "L1" { "galley" } else { "engine_room" };
            goals.extend([
                Goal::assess(Severity::Controllable),
                Goal::pick_up("ext_corridor"),
                Goal::move_to(fire),
                Goal::Act(Action::StartApply),
                Goal::WaitForFireOut,
            ]);
        }
        _ => goals.push(Goal::assess(Severity::ImminentThreat)),
    }
    goals.extend([Goal::Act(Action::Evacuate), Goal::WaitForCompletion]);
    Some(goals)
}

/// Level 2, fire judged controllable: fights the galley fire for 30 s before
/// giving up and evacuating.
pub fn misjudged_inextinguishable_fire() -> Vec<Goal> {
    let mut goals = vec![Goal::move_to("stairwell")];
    report_and_alarm(&mut goals);
    goals.extend([
        Goal::assess(Severity::Controllable),
        Goal::move_to("galley"),
        Goal::pick_up("ext_galley"),
        Goal::Act(Action::StartApply),
        Goal::WaitTicks(300),
        Goal::Act(Action::Evacuate),
        Goal::WaitForCompletion,
    ]);
    goals
}

/// Level 3, fire correctly judged controllable, but evacuates without
/// fighting it.
pub fn evacuates_from_controllable_fire() -> Vec<Goal> {
    let mut goals = vec![Goal::move_to("corridor")];
    report_and_alarm(&mut goals);
    goals.extend([
        Goal::assess(Severity::Controllable),
        Goal::Act(Action::Evacuate),
        Goal::WaitForCompletion,
    ]);
    goals
}
