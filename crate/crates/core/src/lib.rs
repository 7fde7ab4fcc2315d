//! Shipboard fire drill simulation: layouts, fire model, drill procedure,
//! scenarios, the fixed-timestep engine and scoring.

pub mod agents;
pub mod engine;
pub mod fire;
pub mod hash;
pub mod layout;
pub mod messages;
pub mod protocol;
pub mod scenario;
pub mod scoring;

pub use engine::{
    new_session, replay, run_script, Action, ActionCommand, DrillSession, EngineError,
    EventKind, ReplayError, SessionEvent, SessionSnapshot,
};
pub use fire::{Cue, FireSpec, FireState, Severity};
pub use layout::{CompartmentId, EquipmentId, ShipLayout};
pub use protocol::{phase_transition, DrillError, DrillErrorKind, DrillEvent, DrillPhase, TaskChecklist};
pub use scenario::{parse_scenario, validate_scenario, Scenario, ScenarioError, ValidationReport};
pub use scoring::{cohort_analysis, emit_report, score_log, score_session, CohortReport, ScoreReport};
