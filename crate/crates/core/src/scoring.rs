//! Session scoring and cohort analytics.
//!
//! A [`ScoreReport`] is computed from the event log alone: phase durations
//! come from `phase_changed` ticks, the checklist from `task_done` events and
//! the errors from `error` events. There is deliberately no composite grade;
//! time, tasks and decisions are reported side by side.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ticks_to_seconds, DrillSession, EventKind, SessionEvent};
use crate::protocol::{DrillError, DrillPhase, Task, TaskChecklist};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("session has not finished")]
    SessionStillOpen,
    #[error("event log is empty or does not start with session_started")]
    MalformedLog,
    #[error("reference tester has no time for level {0}")]
    MissingReference(String),
    #[error("reference tester `{0}` has no profile")]
    UnknownReference(String),
    #[error("duplicate entry for tester {tester}, level {level}")]
    DuplicateEntry { tester: String, level: String },
    #[error("tester `{0}` has no profile")]
    MissingProfile(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scenario_id: String,
    pub total_time_s: f64,
    pub per_phase_time_s: BTreeMap<DrillPhase, f64>,
    pub checklist: TaskChecklist,
    pub errors: Vec<DrillError>,
    pub completed: bool,
}

impl ScoreReport {
    /// A report carrying only a total time, for cohort data collected
    /// outside the engine.
    pub fn from_time(scenario_id: impl Into<String>, total_time_s: f64) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            total_time_s,
            per_phase_time_s: BTreeMap::new(),
            checklist: TaskChecklist::default(),
            errors: Vec::new(),
            completed: true,
        }
    }
}

pub fn score_session(session: &DrillSession) -> Result<ScoreReport, ScoreError> {
    score_log(session.log())
}

pub fn score_log(events: &[SessionEvent]) -> Result<ScoreReport, ScoreError> {
    let scenario_id = match events.first().map(|e| &e.kind) {
        Some(EventKind::SessionStarted { scenario_id, .. }) => scenario_id.clone(),
        _ => return Err(ScoreError::MalformedLog),
    };
    let mut phase = DrillPhase::Patrol;
    let mut since = 0u64;
    let mut ticks: BTreeMap<DrillPhase, u64> = BTreeMap::from([(DrillPhase::Patrol, 0)]);
    let mut checklist = TaskChecklist::default();
    let mut errors = Vec::new();
    let mut total = None;

    for event in events {
        match &event.kind {
            EventKind::PhaseChanged { to, .. } => {
                *ticks.entry(phase).or_default() += event.tick - since;
                phase = *to;
                since = event.tick;
                ticks.entry(phase).or_default();
            }
            EventKind::TaskDone { task } => {
                checklist.mark(*task);
            }
            EventKind::ErrorLogged { error } => errors.push(error.clone()),
            EventKind::SessionFinished { total_ticks, .. } => total = Some(*total_ticks),
            _ => {}
        }
    }
    let total = total.ok_or(ScoreError::SessionStillOpen)?;
    *ticks.entry(phase).or_default() += total.saturating_sub(since);

    Ok(ScoreReport {
        scenario_id,
        total_time_s: ticks_to_seconds(total),
        per_phase_time_s: ticks.into_iter().map(|(p, t)| (p, ticks_to_seconds(t))).collect(),
        checklist,
        errors,
        completed: phase == DrillPhase::Complete,
    })
}

/// Orders strings by runs of digits numerically, so `"2" < "10"` and
/// `"L2" < "L10"`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    if a.is_empty() || b.is_empty() {
        return a.cmp(b);
    }
    for ((da, ca), (db, cb)) in chunks(a).into_iter().zip(chunks(b)) {
        let ord = if da && db {
            let (ta, tb) = (ca.trim_start_matches('0'), cb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            ca.cmp(cb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// String key with natural ordering; used for tester and level ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(pub String);

impl Key {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key(s.to_owned())
    }
}

pub type TesterId = Key;
pub type LevelId = Key;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Experience {
    Low,
    Medium,
    High,
}

impl fmt::Display for Experience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TesterProfile {
    pub tester_id: TesterId,
    pub exp_fire_drills: Experience,
    pub exp_vr: Experience,
    pub exp_games: Experience,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GamerGroup {
    Experienced,
    NonExperienced,
}

impl TesterProfile {
    /// Only video-game experience decides the group; `Medium` counts as
    /// non-experienced.
    pub fn gamer_group(&self) -> GamerGroup {
        if self.exp_games == Experience::High {
            GamerGroup::Experienced
        } else {
            GamerGroup::NonExperienced
        }
    }
}

pub const PROFILES_HEADER: &str = "tester_id,exp_fire_drills,exp_vr,exp_games";
pub const TIMES_HEADER: &str = "tester_id,level,time_s";

fn read_csv<T: serde::de::DeserializeOwned>(input: impl Read, header: &str) -> Result<Vec<T>, ScoreError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let got = reader
        .headers()
        .map_err(|e| ScoreError::Csv(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if got != header {
        return Err(ScoreError::Csv(format!("expected header `{header}`, found `{got}`")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| ScoreError::Csv(e.to_string())))
        .collect()
}

pub fn load_profiles(input: impl Read) -> Result<Vec<TesterProfile>, ScoreError> {
    read_csv(input, PROFILES_HEADER)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEntry {
    pub tester_id: TesterId,
    pub level: LevelId,
    pub time_s: f64,
}

/// Per-tester level times recorded outside the engine (`tester_id,level,time_s`).
pub fn load_times(input: impl Read) -> Result<Vec<TimeEntry>, ScoreError> {
    read_csv(input, TIMES_HEADER)
}

/// Joins time entries with their tester profiles, ready for [`cohort_analysis`].
pub fn cohort_inputs(
    profiles: &[TesterProfile],
    times: &[TimeEntry],
) -> Result<Vec<(TesterProfile, LevelId, ScoreReport)>, ScoreError> {
    let by_id: BTreeMap<_, _> = profiles.iter().map(|p| (&p.tester_id, p)).collect();
    times
        .iter()
        .map(|t| {
            let p = by_id
                .get(&t.tester_id)
                .ok_or_else(|| ScoreError::MissingProfile(t.tester_id.0.clone()))?;
            Ok((
                (*p).clone(),
                t.level.clone(),
                ScoreReport::from_time(t.level.0.clone(), t.time_s),
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub max_delta_s: f64,
    pub mean_delta_s: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortReport {
    pub reference: TesterId,
    pub profiles: BTreeMap<TesterId, TesterProfile>,
    pub per_tester_level_times: BTreeMap<(TesterId, LevelId), f64>,
    pub deltas_vs_reference: BTreeMap<(TesterId, LevelId), f64>,
    pub group_summaries: BTreeMap<(GamerGroup, LevelId), GroupSummary>,
}

impl CohortReport {
    pub fn levels(&self) -> Vec<&LevelId> {
        let mut levels: Vec<_> = self.per_tester_level_times.keys().map(|(_, l)| l).collect();
        levels.sort();
        levels.dedup();
        levels
    }

    pub fn delta(&self, tester: &str, level: &str) -> Option<f64> {
        self.deltas_vs_reference
            .get(&(Key::from(tester), Key::from(level)))
            .copied()
    }

    pub fn group(&self, group: GamerGroup, level: &str) -> Option<&GroupSummary> {
        self.group_summaries.get(&(group, Key::from(level)))
    }
}

/// Compares every tester's level times against `reference`'s.
pub fn cohort_analysis(
    reports: &[(TesterProfile, LevelId, ScoreReport)],
    reference: &TesterId,
) -> Result<CohortReport, ScoreError> {
    let mut profiles = BTreeMap::new();
    let mut times = BTreeMap::new();
    for (profile, level, report) in reports {
        profiles.insert(profile.tester_id.clone(), profile.clone());
        let key = (profile.tester_id.clone(), level.clone());
        if times.insert(key, report.total_time_s).is_some() {
            return Err(ScoreError::DuplicateEntry {
                tester: profile.tester_id.0.clone(),
                level: level.0.clone(),
            });
        }
    }
    if !profiles.contains_key(reference) {
        return Err(ScoreError::UnknownReference(reference.0.clone()));
    }

    let mut deltas = BTreeMap::new();
    for ((tester, level), time) in &times {
        let base = times
            .get(&(reference.clone(), level.clone()))
            .ok_or_else(|| ScoreError::MissingReference(level.0.clone()))?;
        deltas.insert((tester.clone(), level.clone()), time - base);
    }

    let mut grouped: BTreeMap<(GamerGroup, LevelId), Vec<f64>> = BTreeMap::new();
    for ((tester, level), delta) in &deltas {
        let group = profiles[tester].gamer_group();
        grouped.entry((group, level.clone())).or_default().push(*delta);
    }
    let group_summaries = grouped
        .into_iter()
        .map(|(key, ds)| {
            let max = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = ds.iter().sum::<f64>() / ds.len() as f64;
            (
                key,
                GroupSummary {
                    max_delta_s: max,
                    mean_delta_s: mean,
                    count: ds.len(),
                },
            )
        })
        .collect();

    Ok(CohortReport {
        reference: reference.clone(),
        profiles,
        per_tester_level_times: times,
        deltas_vs_reference: deltas,
        group_summaries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}` (json, table, csv)")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ReportRef<'a> {
    Score(&'a ScoreReport),
    Cohort(&'a CohortReport),
}

pub fn emit_report(report: ReportRef<'_>, format: ReportFormat) -> Vec<u8> {
    let text = match (report, format) {
        (ReportRef::Score(r), ReportFormat::Json) => pretty(r),
        (ReportRef::Score(r), ReportFormat::Table) => score_table(r),
        (ReportRef::Score(r), ReportFormat::Csv) => score_csv(r),
        (ReportRef::Cohort(r), ReportFormat::Json) => pretty(&CohortJson::from(r)),
        (ReportRef::Cohort(r), ReportFormat::Table) => cohort_table(r),
        (ReportRef::Cohort(r), ReportFormat::Csv) => cohort_csv(r),
    };
    text.into_bytes()
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

/// Columns: `scenario_id,phase,time_s`; one row per visited phase in drill
/// order, then a `total` row.
fn score_csv(r: &ScoreReport) -> String {
    let mut out = String::from("scenario_id,phase,time_s\n");
    for (phase, t) in &r.per_phase_time_s {
        let _ = writeln!(out, "{},{},{:.1}", r.scenario_id, phase, t);
    }
    let _ = writeln!(out, "{},total,{:.1}", r.scenario_id, r.total_time_s);
    out
}

fn score_table(r: &ScoreReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Scenario   {}", r.scenario_id);
    let _ = writeln!(out, "Completed  {}", if r.completed { "yes" } else { "no" });
    let _ = writeln!(out, "Total time {:.1} s", r.total_time_s);
    let _ = writeln!(out, "\nPhase                 Time (s)");
    for (phase, t) in &r.per_phase_time_s {
        let _ = writeln!(out, "{:<21} {:>8.1}", phase.as_str(), t);
    }
    let _ = writeln!(out, "\nTasks");
    for task in Task::ALL {
        let mark = if r.checklist.get(task) { 'x' } else { ' ' };
        let _ = writeln!(out, "[{mark}] {}", task.describe());
    }
    let _ = writeln!(out, "\nErrors ({})", r.errors.len());
    for e in &r.errors {
        let _ = writeln!(
            out,
            "t={:>7.1}s {}: {}",
            ticks_to_seconds(e.tick),
            e.kind,
            e.kind.describe()
        );
    }
    out
}

fn cohort_csv(r: &CohortReport) -> String {
    let mut out = String::from("tester,level,time_s,delta_s\n");
    for ((tester, level), time) in &r.per_tester_level_times {
        let delta = r.deltas_vs_reference[&(tester.clone(), level.clone())];
        let _ = writeln!(out, "{tester},{level},{time},{delta}");
    }
    out
}

fn cohort_table(r: &CohortReport) -> String {
    let levels = r.levels();
    let mut out = String::new();
    let _ = write!(out, "{:<8} {:<11} {:<7} {:<7} {:<15}", "Tester", "Fire drills", "VR", "Games", "Group");
    for l in &levels {
        let _ = write!(out, " {:>16}", format!("{l} s (+delta)"));
    }
    out.push('\n');
    for (id, p) in &r.profiles {
        let group = match p.gamer_group() {
            GamerGroup::Experienced => "experienced",
            GamerGroup::NonExperienced => "non-experienced",
        };
        let _ = write!(
            out,
            "{:<8} {:<11} {:<7} {:<7} {:<15}",
            id.as_str(),
            p.exp_fire_drills,
            p.exp_vr,
            p.exp_games,
            group
        );
        for l in &levels {
            let key = (id.clone(), (*l).clone());
            let cell = match (r.per_tester_level_times.get(&key), r.deltas_vs_reference.get(&key)) {
                (Some(t), Some(d)) => format!("{t:.0} ({d:+.0})"),
                _ => "-".to_owned(),
            };
            let _ = write!(out, " {cell:>16}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\nDeltas vs tester {} (s)", r.reference);
    let _ = writeln!(out, "{:<16} {:<6} {:>8} {:>8} {:>6}", "Group", "Level", "Max", "Mean", "Count");
    for ((group, level), s) in &r.group_summaries {
        let g = match group {
            GamerGroup::Experienced => "experienced",
            GamerGroup::NonExperienced => "non-experienced",
        };
        let _ = writeln!(
            out,
            "{:<16} {:<6} {:>8.1} {:>8.1} {:>6}",
            g, level.as_str(), s.max_delta_s, s.mean_delta_s, s.count
        );
    }
    out
}

#[derive(Serialize)]
struct CohortRow<'a> {
    tester: &'a TesterId,
    level: &'a LevelId,
    time_s: f64,
    delta_s: f64,
}

#[derive(Serialize)]
struct GroupRow<'a> {
    group: GamerGroup,
    level: &'a LevelId,
    #[serde(flatten)]
    summary: GroupSummary,
}

#[derive(Serialize)]
struct CohortJson<'a> {
    reference: &'a TesterId,
    testers: Vec<&'a TesterProfile>,
    rows: Vec<CohortRow<'a>>,
    groups: Vec<GroupRow<'a>>,
}

impl<'a> From<&'a CohortReport> for CohortJson<'a> {
    fn from(r: &'a CohortReport) -> Self {
        CohortJson {
            reference: &r.reference,
            testers: r.profiles.values().collect(),
            rows: r
                .per_tester_level_times
                .iter()
                .map(|((tester, level), t)| CohortRow {
                    tester,
                    level,
                    time_s: *t,
                    delta_s: r.deltas_vs_reference[&(tester.clone(), level.clone())],
                })
                .collect(),
            groups: r
                .group_summaries
                .iter()
                .map(|((group, level), s)| GroupRow {
                    group: *group,
                    level,
                    summary: *s,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(id: &str, games: Experience) -> TesterProfile {
        TesterProfile {
            tester_id: id.into(),
            exp_fire_drills: Experience::Low,
            exp_vr: Experience::Low,
            exp_games: games,
        }
    }

    fn entry(id: &str, games: Experience, level: &str, t: f64) -> (TesterProfile, LevelId, ScoreReport) {
        (profile(id, games), level.into(), ScoreReport::from_time(level, t))
    }

    #[test]
    fn natural_order() {
        let mut v = vec!["10", "2", "1", "L10", "L2", "a"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["1", "2", "10", "L2", "L10", "a"]);
        assert_eq!(natural_cmp("01", "1"), Ordering::Greater);
    }

    #[test]
    fn single_reference_tester_has_zero_deltas() {
        let r = cohort_analysis(&[entry("1", Experience::High, "L1", 100.0)], &"1".into()).unwrap();
        assert_eq!(r.delta("1", "L1"), Some(0.0));
    }

    #[test]
    fn identical_times_give_zero_delta() {
        let r = cohort_analysis(
            &[
                entry("1", Experience::High, "L1", 80.0),
                entry("2", Experience::Low, "L1", 80.0),
            ],
            &"1".into(),
        )
        .unwrap();
        assert_eq!(r.delta("2", "L1"), Some(0.0));
    }

    #[test]
    fn missing_reference_level_is_an_error() {
        let err = cohort_analysis(
            &[entry("1", Experience::High, "L1", 80.0), entry("2", Experience::Low, "L2", 80.0)],
            &"1".into(),
        )
        .unwrap_err();
        assert_eq!(err, ScoreError::MissingReference("L2".into()));
    }

    #[test]
    fn medium_gamers_are_not_experienced() {
        assert_eq!(profile("x", Experience::Medium).gamer_group(), GamerGroup::NonExperienced);
        assert_eq!(profile("x", Experience::High).gamer_group(), GamerGroup::Experienced);
    }

    #[test]
    fn profiles_csv_requires_exact_header_and_vocabulary() {
        let ok = "tester_id,exp_fire_drills,exp_vr,exp_games\n1,High,High,High\n2,High,Low,Low\n";
        let p = load_profiles(ok.as_bytes()).unwrap();
        assert_eq!(p[1].exp_games, Experience::Low);
        assert!(load_profiles("id,a,b,c\n1,High,High,High\n".as_bytes()).is_err());
        assert!(load_profiles("tester_id,exp_fire_drills,exp_vr,exp_games\n1,high,High,High\n".as_bytes()).is_err());
    }

    #[test]
    fn cohort_csv_has_documented_header() {
        let r = cohort_analysis(
            &[entry("10", Experience::High, "L1", 90.0), entry("2", Experience::Low, "L1", 100.0)],
            &"10".into(),
        )
        .unwrap();
        let text = String::from_utf8(emit_report(ReportRef::Cohort(&r), ReportFormat::Csv)).unwrap();
        assert_eq!(text, "tester,level,time_s,delta_s\n2,L1,100,10\n10,L1,90,0\n");
    }

    #[test]
    fn score_report_json_round_trips() {
        let mut r = ScoreReport::from_time("L1", 81.3);
        r.per_phase_time_s.insert(DrillPhase::Suppressing, 45.0);
        let bytes = emit_report(ReportRef::Score(&r), ReportFormat::Json);
        let back: ScoreReport = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn swapping_reference_shifts_deltas_by_a_constant(
            times in proptest::collection::vec((1.0f64..500.0, 1.0f64..500.0), 2..8)
        ) {
            let mut rows = Vec::new();
            for (i, (a, b)) in times.iter().enumerate() {
                let games = if i % 2 == 0 { Experience::High } else { Experience::Low };
                rows.push(entry(&i.to_string(), games, "L1", *a));
                rows.push(entry(&i.to_string(), games, "L2", *b));
            }
            let ra = cohort_analysis(&rows, &"0".into()).unwrap();
            let rb = cohort_analysis(&rows, &"1".into()).unwrap();
            for level in ["L1", "L2"] {
                let shift = ra.delta("1", level).unwrap();
                for i in 0..times.len() {
                    let t = i.to_string();
                    let lhs = ra.delta(&t, level).unwrap() - rb.delta(&t, level).unwrap();
                    prop_assert!((lhs - shift).abs() < 1e-9);
                }
                let counted: usize = [GamerGroup::Experienced, GamerGroup::NonExperienced]
                    .iter()
                    .filter_map(|g| ra.group(*g, level))
                    .map(|s| s.count)
                    .sum();
                prop_assert_eq!(counted, times.len());
            }
        }
    }
}
