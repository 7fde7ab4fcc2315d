//! Scenario files: strict parsing, compliance validation and the built-in
//! training levels.
//!
//! A scenario is one JSON document with exactly the top-level keys `id`,
//! `title`, `layout`, `fire` and `drill`. Unknown keys anywhere are
//! rejected. See `data/scenario.schema.json` for the formal schema.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fire::FireSpec;
use crate::layout::{
    CompartmentId, CompartmentKind, EquipmentKind, LayoutDoc, LayoutError, ShipLayout,
};

/// Every compartment must be within this many passages of an alarm call point.
pub const ALARM_AUDIBLE_HOPS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: unknown id `{id}`")]
    ReferenceError { field: String, id: String },
    #[error("{field}: {message}")]
    SchemaError { field: String, message: String },
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::SchemaError {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DrillDoc {
    guidance: bool,
    trainee_start: CompartmentId,
    #[serde(default)]
    time_limit_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    id: String,
    title: String,
    layout: LayoutDoc,
    fire: FireSpec,
    drill: DrillDoc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub title: String,
    pub layout: ShipLayout,
    pub fire: FireSpec,
    pub guidance_enabled: bool,
    pub trainee_start: CompartmentId,
    pub time_limit_s: Option<f64>,
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_doc().serialize(serializer)
    }
}

impl Scenario {
    fn to_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            id: self.id.clone(),
            title: self.title.clone(),
            layout: self.layout.clone().into(),
            fire: self.fire.clone(),
            drill: DrillDoc {
                guidance: self.guidance_enabled,
                trainee_start: self.trainee_start.clone(),
                time_limit_s: self.time_limit_s,
            },
        }
    }

    /// Canonical text form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("scenario serializes");
        s.push('\n');
        s
    }
}

pub fn parse_scenario(bytes: &[u8]) -> Result<Scenario, ScenarioError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let before = &bytes[..e.valid_up_to()];
        let line = before.iter().filter(|b| **b == b'\n').count() + 1;
        let column = before.iter().rev().take_while(|b| **b != b'\n').count() + 1;
        ScenarioError::ParseError {
            line,
            column,
            message: "invalid UTF-8".into(),
        }
    })?;
    if text.trim().is_empty() {
        return Err(schema("document", "empty document"));
    }

    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(&mut de).map_err(map_serde_error)?;
    de.end().map_err(|e| syntax_error(&e))?;

    resolve(doc)
}

fn syntax_error(e: &serde_json::Error) -> ScenarioError {
    ScenarioError::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn map_serde_error(e: serde_path_to_error::Error<serde_json::Error>) -> ScenarioError {
    use serde_json::error::Category;
    let path = e.path().to_string();
    let inner = e.inner();
    match inner.classify() {
        Category::Syntax | Category::Eof | Category::Io => syntax_error(inner),
        Category::Data => {
            let message = inner.to_string();
            let message = message
                .split(" at line ")
                .next()
                .unwrap_or_default()
                .to_owned();
            let field = match message.strip_prefix("missing field `") {
                Some(rest) => {
                    let name = rest.split('`').next().unwrap_or_default();
                    if path == "." {
                        name.to_owned()
                    } else {
                        format!("{path}.{name}")
                    }
                }
                None => path,
            };
            schema(field, message)
        }
    }
}

fn resolve(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
    if doc.id.trim().is_empty() {
        return Err(schema("id", "must not be empty"));
    }
    for (i, c) in doc.layout.compartments.iter().enumerate() {
        if !(c.x.is_finite() && c.y.is_finite()) {
            return Err(schema(format!("layout.compartments[{i}]"), "coordinates must be finite"));
        }
    }
    let layout = ShipLayout::try_from(doc.layout).map_err(|e| match e {
        LayoutError::DanglingReference { field, id } => ScenarioError::ReferenceError { field, id },
        LayoutError::DuplicateId { field, id } => schema(field, format!("duplicate id `{id}`")),
        other => match &other {
            LayoutError::BadLength { field, .. } => schema(field.clone(), other.to_string()),
            _ => schema("layout", other.to_string()),
        },
    })?;

    let fire = doc.fire;
    if !layout.contains(&fire.compartment) {
        return Err(ScenarioError::ReferenceError {
            field: "fire.compartment".into(),
            id: fire.compartment.0,
        });
    }
    if !(0.0..=crate::fire::INTENSITY_MAX).contains(&fire.initial_intensity) {
        return Err(schema("fire.initial_intensity", "must be between 0 and 100"));
    }
    if !(fire.growth_rate.is_finite() && fire.growth_rate >= 0.0) {
        return Err(schema("fire.growth_rate", "must be a nonnegative number"));
    }
    if !(fire.extinguish_work_s.is_finite() && fire.extinguish_work_s > 0.0) {
        return Err(schema("fire.extinguish_work_s", "must be a positive number"));
    }
    if fire.audible_hops < 1 {
        return Err(schema("fire.audible_hops", "must be at least 1"));
    }

    let drill = doc.drill;
    if !layout.contains(&drill.trainee_start) {
        return Err(ScenarioError::ReferenceError {
            field: "drill.trainee_start".into(),
            id: drill.trainee_start.0,
        });
    }
    if drill.trainee_start == fire.compartment {
        return Err(schema("drill.trainee_start", "must differ from the fire compartment"));
    }
    if let Some(limit) = drill.time_limit_s {
        if !(limit.is_finite() && limit > 0.0) {
            return Err(schema("drill.time_limit_s", "must be a positive number or null"));
        }
    }

    Ok(Scenario {
        id: doc.id,
        title: doc.title,
        layout,
        fire,
        guidance_enabled: drill.guidance,
        trainee_start: drill.trainee_start,
        time_limit_s: drill.time_limit_s,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Alarm coverage.
    V1,
    /// Signed evacuation route to a muster area.
    V2,
    /// Extinguishers in fire-prone spaces.
    V3,
    /// Signage along shortest escape routes.
    V4,
    /// An emergency phone reachable from the start position.
    V5,
    /// Unnamed compartment (style).
    W1,
}

impl Rule {
    pub fn citation(self) -> &'static str {
        match self {
            Rule::V1 => "SOLAS Regulation II-2/7 and III 6.4.2",
            Rule::V2 => "SOLAS Regulation II-2/12",
            Rule::V3 => "SOLAS Regulation II/2.2.1.7, 5, 7.5.1, 15.2.1.1, 15.2.3, 16.2, 18.8, and III 35",
            Rule::V4 => "SOLAS Regulation II/13.3.2.5",
            Rule::V5 => "SOLAS Regulation II-2/15.2.2 and III/19.3",
            Rule::W1 => "",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingSeverity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: Rule,
    pub severity: FindingSeverity,
    pub message: String,
    pub citation: String,
    pub subject: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(findings: Vec<Finding>) -> Self {
        let ok = findings.iter().all(|f| f.severity != FindingSeverity::Error);
        Self { ok, findings }
    }

    /// Rules with at least one error finding.
    pub fn failed_rules(&self) -> BTreeSet<Rule> {
        self.findings
            .iter()
            .filter(|f| f.severity == FindingSeverity::Error)
            .map(|f| f.rule)
            .collect()
    }

    /// One JSON object per finding, newline-terminated.
    pub fn to_json_lines(&self) -> String {
        self.findings
            .iter()
            .map(|f| serde_json::to_string(f).expect("finding serializes") + "\n")
            .collect()
    }
}

fn finding(rule: Rule, subject: impl Into<String>, message: impl Into<String>) -> Finding {
    Finding {
        rule,
        severity: if rule == Rule::W1 {
            FindingSeverity::Warning
        } else {
            FindingSeverity::Error
        },
        message: message.into(),
        citation: rule.citation().to_owned(),
        subject: subject.into(),
    }
}

/// Runs the compliance rules. Never fails; problems come back as findings.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let layout = &s.layout;
    let mut findings = Vec::new();
    check_alarms(layout, &mut findings);
    let no_signed_route = check_escape_routes(layout, &mut findings);
    check_extinguishers(layout, &mut findings);
    check_signage(layout, &no_signed_route, &mut findings);
    check_phone(s, &mut findings);
    for c in layout.compartments() {
        if c.display_name.trim().is_empty() {
            findings.push(finding(Rule::W1, c.id.as_str(), "compartment has no display name"));
        }
    }
    ValidationReport::from_findings(findings)
}

fn check_alarms(layout: &ShipLayout, out: &mut Vec<Finding>) {
    let alarms: Vec<_> = layout
        .equipment()
        .iter()
        .filter(|e| e.kind == EquipmentKind::AlarmCallPoint)
        .collect();
    if alarms.is_empty() {
        out.push(finding(Rule::V1, "layout", "no alarm call point in the layout"));
        return;
    }
    let mut nearest: Vec<Option<u32>> = vec![None; layout.compartments().len()];
    for alarm in &alarms {
        let hops = layout.hop_counts(&alarm.compartment).expect("validated reference");
        for (slot, h) in nearest.iter_mut().zip(hops) {
            if let Some(h) = h {
                *slot = Some(slot.map_or(h, |cur| cur.min(h)));
            }
        }
    }
    for (c, hops) in layout.compartments().iter().zip(nearest) {
        if hops.is_none_or(|h| h > ALARM_AUDIBLE_HOPS) {
            out.push(finding(
                Rule::V1,
                c.id.as_str(),
                format!("more than {ALARM_AUDIBLE_HOPS} passages from the nearest alarm call point"),
            ));
        }
    }
}

/// Returns the compartments without a signed route, for V4 to skip.
fn check_escape_routes(layout: &ShipLayout, out: &mut Vec<Finding>) -> BTreeSet<CompartmentId> {
    let mut missing = BTreeSet::new();
    if layout.muster_areas().next().is_none() {
        for c in layout.compartments() {
            out.push(finding(Rule::V2, c.id.as_str(), "layout has no muster area"));
            missing.insert(c.id.clone());
        }
        return missing;
    }
    if !layout.is_connected() {
        out.push(finding(Rule::V2, "layout", "compartment graph is not connected"));
    }
    let signed = layout.muster_distances(true);
    for (c, d) in layout.compartments().iter().zip(signed) {
        if d.is_none() {
            out.push(finding(
                Rule::V2,
                c.id.as_str(),
                "no route with escape signage to any muster area",
            ));
            missing.insert(c.id.clone());
        }
    }
    missing
}

fn check_extinguishers(layout: &ShipLayout, out: &mut Vec<Finding>) {
    for c in layout.compartments().iter().filter(|c| c.kind.is_fire_prone()) {
        let here = layout
            .equipment_in(&c.id, EquipmentKind::Extinguisher)
            .expect("compartment from layout");
        if here.is_empty() {
            out.push(finding(Rule::V3, c.id.as_str(), "fire-prone space without an extinguisher"));
        }
    }
}

/// For every compartment, at least one of its shortest routes to a muster
/// area must be fully signed. Otherwise each unsigned passage on the
/// (tie-broken) shortest route is reported once.
fn check_signage(layout: &ShipLayout, skip: &BTreeSet<CompartmentId>, out: &mut Vec<Finding>) {
    const EPS: f64 = 1e-9;
    let signed = layout.muster_distances(true);
    let any = layout.muster_distances(false);
    let mut offending = BTreeSet::new();
    for ((c, ds), da) in layout.compartments().iter().zip(signed).zip(any) {
        if skip.contains(&c.id) {
            continue;
        }
        let (Some(ds), Some(da)) = (ds, da) else { continue };
        if ds <= da + EPS {
            continue;
        }
        let route = layout
            .shortest_unrestricted_escape(&c.id)
            .expect("compartment from layout")
            .unwrap_or_default();
        for w in route.windows(2) {
            if let Some(p) = layout.passage_between(&w[0], &w[1]) {
                if !p.has_escape_signage {
                    offending.insert(p.label());
                }
            }
        }
    }
    for label in offending {
        out.push(finding(
            Rule::V4,
            label,
            "passage on a shortest escape route lacks escape signage",
        ));
    }
}

fn check_phone(s: &Scenario, out: &mut Vec<Finding>) {
    let layout = &s.layout;
    let hops = layout.hop_counts(&s.trainee_start).expect("validated reference");
    let reachable = layout.equipment().iter().any(|e| {
        e.kind == EquipmentKind::EmergencyPhone
            && layout
                .compartments()
                .iter()
                .position(|c| c.id == e.compartment)
                .is_some_and(|i| hops[i].is_some())
    });
    if !reachable {
        out.push(finding(
            Rule::V5,
            s.trainee_start.as_str(),
            "no emergency phone reachable from the start position",
        ));
    }
}

const BUILTIN_SOURCES: [(&str, &str); 4] = [
    ("L1", include_str!("../data/scenarios/L1.json")),
    ("L2", include_str!("../data/scenarios/L2.json")),
    ("L3", include_str!("../data/scenarios/L3.json")),
    ("L4", include_str!("../data/scenarios/L4.json")),
];

/// The four shipped training levels, in order L1..L4.
pub fn builtin_levels() -> Vec<Scenario> {
    BUILTIN_SOURCES
        .iter()
        .map(|(id, src)| {
            parse_scenario(src.as_bytes()).unwrap_or_else(|e| panic!("built-in level {id}: {e}"))
        })
        .collect()
}

pub fn builtin_level(id: &str) -> Option<Scenario> {
    BUILTIN_SOURCES
        .iter()
        .find(|(lid, _)| *lid == id)
        .map(|(_, src)| parse_scenario(src.as_bytes()).expect("built-in level parses"))
}

/// Raw text of a built-in level file.
pub fn builtin_source(id: &str) -> Option<&'static str> {
    BUILTIN_SOURCES.iter().find(|(lid, _)| *lid == id).map(|(_, s)| *s)
}

/// Single structural edit to a scenario's layout.
#[derive(Clone, Debug, PartialEq)]
pub enum LayoutEdit {
    /// Drops every muster area and the passages touching it.
    RemoveMusterAreas,
    /// Clears the signage flag on the passage between two compartments.
    Unsign(CompartmentId, CompartmentId),
    RemoveEquipment(crate::layout::EquipmentId),
    RemoveAllEquipment(EquipmentKind),
}

impl LayoutEdit {
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario, LayoutError> {
        let mut doc: LayoutDoc = scenario.layout.clone().into();
        match self {
            LayoutEdit::RemoveMusterAreas => {
                let gone: BTreeSet<CompartmentId> = doc
                    .compartments
                    .iter()
                    .filter(|c| c.kind == CompartmentKind::MusterArea)
                    .map(|c| c.id.clone())
                    .collect();
                doc.compartments.retain(|c| !gone.contains(&c.id));
                doc.passages.retain(|p| !gone.contains(&p.from) && !gone.contains(&p.to));
                doc.equipment.retain(|e| !gone.contains(&e.compartment));
            }
            LayoutEdit::Unsign(a, b) => {
                let p = doc
                    .passages
                    .iter_mut()
                    .find(|p| (&p.from, &p.to) == (a, b) || (&p.from, &p.to) == (b, a))
                    .ok_or_else(|| LayoutError::NoRoute { from: a.clone(), to: b.clone() })?;
                p.has_escape_signage = false;
            }
            LayoutEdit::RemoveEquipment(id) => {
                let before = doc.equipment.len();
                doc.equipment.retain(|e| &e.id != id);
                if doc.equipment.len() == before {
                    return Err(LayoutError::UnknownEquipment(id.clone()));
                }
            }
            LayoutEdit::RemoveAllEquipment(kind) => doc.equipment.retain(|e| e.kind != *kind),
        }
        let mut out = scenario.clone();
        out.layout = ShipLayout::try_from(doc)?;
        Ok(out)
    }
}

/// Extra check for the shipped levels: fires start in a galley or engine room.
pub fn fire_in_expected_space(s: &Scenario) -> bool {
    s.layout
        .compartment(&s.fire.compartment)
        .is_ok_and(|c| matches!(c.kind, CompartmentKind::Galley | CompartmentKind::EngineRoom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Equipment;
    use serde_json::Value;

    fn l1_value() -> Value {
        serde_json::from_str(builtin_source("L1").unwrap()).unwrap()
    }

    fn parse_value(v: &Value) -> Result<Scenario, ScenarioError> {
        parse_scenario(serde_json::to_string(v).unwrap().as_bytes())
    }

    #[test]
    fn l1_parses_as_guided_galley_fire() {
        let s = builtin_level("L1").unwrap();
        assert_eq!(s.id, "L1");
        assert_eq!(s.fire.compartment, "galley".into());
        assert!(s.fire.extinguishable);
        assert!(s.guidance_enabled);
        assert_eq!(s.time_limit_s, None);
    }

    #[test]
    fn empty_file_is_schema_error() {
        assert!(matches!(parse_scenario(b""), Err(ScenarioError::SchemaError { .. })));
        assert!(matches!(parse_scenario(b"  \n"), Err(ScenarioError::SchemaError { .. })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_scenario(b"{\n  \"id\": \"L1\",\n  oops\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::ParseError { line: 3, .. }), "{err:?}");
        let err = parse_scenario(b"{\"id\": \"x\"").unwrap_err();
        assert!(matches!(err, ScenarioError::ParseError { .. }), "{err:?}");
    }

    #[test]
    fn dangling_fire_compartment_is_reference_error() {
        let mut v = l1_value();
        v["fire"]["compartment"] = "boiler_room".into();
        assert_eq!(
            parse_value(&v),
            Err(ScenarioError::ReferenceError {
                field: "fire.compartment".into(),
                id: "boiler_room".into()
            })
        );
    }

    #[test]
    fn dangling_equipment_is_reference_error() {
        let mut v = l1_value();
        v["layout"]["equipment"][0]["compartment"] = "nowhere".into();
        assert!(matches!(
            parse_value(&v),
            Err(ScenarioError::ReferenceError { ref field, .. }) if field == "layout.equipment[0].compartment"
        ));
    }

    #[test]
    fn missing_field_names_the_field() {
        let mut v = l1_value();
        v["fire"].as_object_mut().unwrap().remove("growth_rate");
        let err = parse_value(&v).unwrap_err();
        assert!(matches!(err, ScenarioError::SchemaError { ref field, .. } if field == "fire.growth_rate"), "{err:?}");

        let mut v = l1_value();
        v.as_object_mut().unwrap().remove("drill");
        let err = parse_value(&v).unwrap_err();
        assert!(matches!(err, ScenarioError::SchemaError { ref field, .. } if field == "drill"), "{err:?}");
    }

    #[test]
    fn unknown_fields_are_rejected_everywhere() {
        let mut v = l1_value();
        v["difficulty"] = 3.into();
        assert!(matches!(parse_value(&v), Err(ScenarioError::SchemaError { .. })));

        let mut v = l1_value();
        v["layout"]["passages"][0]["door"] = true.into();
        assert!(matches!(parse_value(&v), Err(ScenarioError::SchemaError { .. })));
    }

    #[test]
    fn start_in_fire_compartment_is_rejected() {
        let mut v = l1_value();
        v["drill"]["trainee_start"] = "galley".into();
        assert!(matches!(parse_value(&v), Err(ScenarioError::SchemaError { ref field, .. }) if field == "drill.trainee_start"));
    }

    #[test]
    fn bad_numbers_are_rejected() {
        for (section, key, val) in [
            ("fire", "audible_hops", Value::from(0)),
            ("fire", "extinguish_work_s", Value::from(0.0)),
            ("fire", "growth_rate", Value::from(-1.0)),
            ("drill", "time_limit_s", Value::from(-5.0)),
        ] {
            let mut v = l1_value();
            v[section][key] = val;
            assert!(matches!(parse_value(&v), Err(ScenarioError::SchemaError { .. })), "{section}.{key}");
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        for s in builtin_levels() {
            let text = s.to_json();
            let again = parse_scenario(text.as_bytes()).unwrap();
            assert_eq!(again, s);
            assert_eq!(again.to_json(), text);
        }
    }

    #[test]
    fn unnamed_compartment_is_only_a_warning() {
        let mut s = builtin_level("L1").unwrap();
        let mut doc: LayoutDoc = s.layout.clone().into();
        doc.compartments[0].display_name.clear();
        s.layout = ShipLayout::try_from(doc).unwrap();
        let report = validate_scenario(&s);
        assert!(report.ok);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].severity, FindingSeverity::Warning);
    }

    #[test]
    fn missing_galley_extinguisher_gives_single_v3() {
        let mut s = builtin_level("L1").unwrap();
        let mut doc: LayoutDoc = s.layout.clone().into();
        doc.equipment.retain(|e: &Equipment| {
            !(e.kind == EquipmentKind::Extinguisher && e.compartment == "galley".into())
        });
        s.layout = ShipLayout::try_from(doc).unwrap();
        let report = validate_scenario(&s);
        assert!(!report.ok);
        assert_eq!(report.findings.len(), 1);
        let f = &report.findings[0];
        assert_eq!((f.rule, f.subject.as_str()), (Rule::V3, "galley"));
        assert!(f.citation.contains("II/2.2.1.7"));
    }

    #[test]
    fn report_serializes_as_json_lines() {
        let report = ValidationReport::from_findings(vec![finding(Rule::V1, "layout", "x")]);
        let text = report.to_json_lines();
        assert!(text.ends_with('\n'));
        let v: Value = serde_json::from_str(text.trim()).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["citation", "message", "rule", "severity", "subject"].map(String::from).into()
        );
        assert_eq!(v["rule"], "V1");
        assert_eq!(v["severity"], "error");
    }
}
