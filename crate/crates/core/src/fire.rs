//! Single-fire model: intensity growth, an extinguishing work budget, and
//! the cues a burning fire gives off.
//!
//! Extinguishing is tracked as seconds of agent application still needed.
//! The budget only ever shrinks, and only while agent is applied inside the
//! fire's compartment. Intensity is presentation: it never gates
//! extinguishing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{CompartmentId, LayoutError, ShipLayout};

pub const INTENSITY_MAX: f64 = 100.0;

/// Remaining work at or below this is treated as done. Repeated subtraction
/// of a decimal tick length leaves rounding residue of order 1e-13.
const WORK_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireSpec {
    pub compartment: CompartmentId,
    pub initial_intensity: f64,
    /// Intensity units per second.
    pub growth_rate: f64,
    pub extinguishable: bool,
    /// Seconds of continuous agent application needed. Ignored when the
    /// fire is not extinguishable.
    pub extinguish_work_s: f64,
    /// Burning sound is heard within this many passages.
    pub audible_hops: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FireStatus {
    Burning,
    Extinguished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    Visual,
    Auditory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Controllable,
    ImminentThreat,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Severity::Controllable => "controllable",
            Severity::ImminentThreat => "imminent_threat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FireError {
    #[error("the fire is already extinguished")]
    FireAlreadyOut,
    #[error("tick length must be positive and finite, got {0}")]
    BadTimestep(f64),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireState {
    pub spec: FireSpec,
    pub intensity: f64,
    pub remaining_work_s: f64,
    pub status: FireStatus,
}

impl FireState {
    pub fn ignite(spec: FireSpec) -> Self {
        FireState {
            intensity: spec.initial_intensity.clamp(0.0, INTENSITY_MAX),
            remaining_work_s: spec.extinguish_work_s,
            status: FireStatus::Burning,
            spec,
        }
    }

    pub fn is_burning(&self) -> bool {
        self.status == FireStatus::Burning
    }

    /// Advances the fire by `dt` seconds. Agent only counts when applied from
    /// inside the fire's compartment.
    pub fn tick(
        &self,
        dt: f64,
        agent_applied: bool,
        applier_compartment: &CompartmentId,
    ) -> Result<FireState, FireError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FireError::BadTimestep(dt));
        }
        if !self.is_burning() {
            return Err(FireError::FireAlreadyOut);
        }
        let mut next = self.clone();
        next.intensity = (self.intensity + self.spec.growth_rate * dt).clamp(0.0, INTENSITY_MAX);

        let effective = agent_applied
            && self.spec.extinguishable
            && applier_compartment == &self.spec.compartment;
        if effective {
            let left = (self.remaining_work_s - dt).max(0.0);
            next.remaining_work_s = if left <= WORK_EPSILON { 0.0 } else { left };
            if next.remaining_work_s == 0.0 {
                next.status = FireStatus::Extinguished;
            }
        }
        Ok(next)
    }

    /// Cues perceived by someone standing in `observer`.
    pub fn cues_at(
        &self,
        layout: &ShipLayout,
        observer: &CompartmentId,
    ) -> Result<BTreeSet<Cue>, LayoutError> {
        let hops = layout.graph_distance(observer, &self.spec.compartment)?;
        let mut cues = BTreeSet::new();
        if !self.is_burning() {
            return Ok(cues);
        }
        if observer == &self.spec.compartment {
            cues.insert(Cue::Visual);
        }
        if hops.is_some_and(|h| h <= self.spec.audible_hops) {
            cues.insert(Cue::Auditory);
        }
        Ok(cues)
    }
}

/// Ground-truth severity: a fire is controllable exactly when it can be put out.
pub fn severity_class(spec: &FireSpec) -> Severity {
    if spec.extinguishable {
        Severity::Controllable
    } else {
        Severity::ImminentThreat
    }
}
