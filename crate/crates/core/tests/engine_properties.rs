//! Randomized trainees against the shipped levels.

use drillsim_core::engine::{
    log_to_jsonl, replay, run_script, Action, ActionCommand, DrillSession, EventKind,
};
use drillsim_core::fire::{FireStatus, Severity};
use drillsim_core::layout::EquipmentKind;
use drillsim_core::scenario::{builtin_level, Scenario};
use drillsim_core::scoring::score_log;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plays a random but not entirely aimless trainee for up to `steps`
/// commands, returning the commands issued.
fn random_commands(scenario: &Scenario, seed: u64, steps: usize) -> Vec<ActionCommand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = DrillSession::new(scenario.clone(), seed).unwrap();
    let layout = &scenario.layout;
    let mut out = Vec::new();
    for _ in 0..steps {
        for _ in 0..rng.random_range(0..120) {
            session.advance().unwrap();
        }
        let here = session.trainee().compartment.clone();
        let action = match rng.random_range(0..10) {
            0 => Action::MoveTo {
                target: layout.compartments()[rng.random_range(0..layout.compartments().len())].id.clone(),
            },
            1 => Action::MoveTo { target: scenario.fire.compartment.clone() },
            2 => match layout.equipment_in(&here, EquipmentKind::Extinguisher).unwrap().first() {
                Some(id) => Action::PickUp { equipment: id.clone() },
                None => Action::PickUp {
                    equipment: layout.equipment()[rng.random_range(0..layout.equipment().len())].id.clone(),
                },
            },
            3 | 4 => Action::StartApply,
            5 => Action::StopApply,
            6 => Action::UsePhone,
            7 => Action::PullAlarm,
            8 => Action::Assess {
                severity: if rng.random_bool(0.5) { Severity::Controllable } else { Severity::ImminentThreat },
            },
            _ => {
                if rng.random_bool(0.3) {
                    Action::Evacuate
                } else {
                    Action::Wait
                }
            }
        };
        let cmd = ActionCommand::new(session.tick(), action);
        session.step(&cmd).unwrap();
        out.push(cmd);
    }
    out
}

fn level() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("L1"), Just("L2"), Just("L3"), Just("L4")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inextinguishable_fires_stay_lit(seed: u64, hard in prop_oneof![Just("L2"), Just("L4")]) {
        let s = builtin_level(hard).unwrap();
        let cmds = random_commands(&s, seed, 40);
        let (session, _) = run_script(s, &cmds, seed).unwrap();
        prop_assert_eq!(session.fire().status, FireStatus::Burning);
        prop_assert!(!session.log().iter().any(|e| matches!(e.kind, EventKind::FireExtinguished)));
    }

    #[test]
    fn trainee_only_moves_along_passages(seed: u64, lvl in level()) {
        let s = builtin_level(lvl).unwrap();
        let cmds = random_commands(&s, seed, 30);
        let (session, _) = run_script(s.clone(), &cmds, seed).unwrap();
        let mut at = s.trainee_start.clone();
        let mut heading = None;
        for e in session.log() {
            match &e.kind {
                EventKind::Departed { from, to } => {
                    prop_assert_eq!(from, &at);
                    prop_assert!(s.layout.passage_between(from, to).is_some());
                    heading = Some(to.clone());
                }
                EventKind::Arrived { compartment } => {
                    prop_assert_eq!(Some(compartment), heading.as_ref());
                    at = compartment.clone();
                    heading = None;
                }
                _ => {}
            }
        }
        prop_assert_eq!(&session.trainee().compartment, &at);
    }

    #[test]
    fn runs_are_deterministic_and_replayable(seed: u64, lvl in level()) {
        let s = builtin_level(lvl).unwrap();
        let cmds = random_commands(&s, seed, 25);
        let (a, score_a) = run_script(s.clone(), &cmds, seed).unwrap();
        let (b, _) = run_script(s.clone(), &cmds, seed).unwrap();
        prop_assert_eq!(log_to_jsonl(a.log()), log_to_jsonl(b.log()));
        let replayed = replay(a.log(), s).unwrap();
        prop_assert_eq!(replayed.state_hash(), a.state_hash());
        prop_assert_eq!(score_log(replayed.log()).unwrap(), score_a);
    }

    #[test]
    fn log_ticks_and_seqs_are_ordered(seed: u64, lvl in level()) {
        let s = builtin_level(lvl).unwrap();
        let cmds = random_commands(&s, seed, 20);
        let (session, score) = run_script(s, &cmds, seed).unwrap();
        for (i, w) in session.log().windows(2).enumerate() {
            prop_assert!(w[0].tick <= w[1].tick, "event {}", i);
            prop_assert_eq!(w[0].seq + 1, w[1].seq);
        }
        let phase_sum: f64 = score.per_phase_time_s.values().sum();
        prop_assert!((phase_sum - score.total_time_s).abs() < 1e-6);
    }
}
