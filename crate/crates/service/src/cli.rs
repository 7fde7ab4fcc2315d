//! Command implementations behind the `drillsim` binary.
//!
//! Each returns the process exit status and writes to the given streams, so
//! they can be exercised without spawning a process.

use std::io::Write;
use std::path::{Path, PathBuf};

use drillsim_core::engine::{
    log_to_jsonl, parse_log, parse_script, replay_text, run_script, ReplayError,
};
use drillsim_core::scenario::{builtin_level, parse_scenario, validate_scenario, Scenario};
use drillsim_core::scoring::{
    cohort_analysis, cohort_inputs, emit_report, load_profiles, load_times, score_log, ReportFormat,
    ReportRef, ScoreReport, TesterProfile,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;

/// A scenario argument is a file path, or the id of a built-in level when
/// no such file exists.
pub fn load_scenario(arg: &str) -> Result<Scenario, String> {
    let path = Path::new(arg);
    if path.exists() {
        let bytes = std::fs::read(path).map_err(|e| format!("{arg}: {e}"))?;
        return parse_scenario(&bytes).map_err(|e| format!("{arg}: {e}"));
    }
    builtin_level(arg).ok_or_else(|| format!("{arg}: no such file or built-in level"))
}

pub fn validate(scenario: &str, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let s = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let report = validate_scenario(&s);
    let _ = out.write_all(report.to_json_lines().as_bytes());
    if report.ok {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

pub struct RunArgs<'a> {
    pub scenario: &'a str,
    pub script: &'a Path,
    pub seed: u64,
    pub log_out: Option<&'a Path>,
    pub format: ReportFormat,
}

pub fn run(args: RunArgs<'_>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let scenario = match load_scenario(args.scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let commands = match std::fs::read_to_string(args.script)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_script(&t).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.script.display());
            return EXIT_INPUT;
        }
    };
    let (session, score) = match run_script(scenario, &commands, args.seed) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Some(path) = args.log_out {
        if let Err(e) = std::fs::write(path, log_to_jsonl(session.log())) {
            let _ = writeln!(err, "error: writing {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    let _ = out.write_all(&emit_report(ReportRef::Score(&score), args.format));
    let _ = writeln!(err, "state_hash {}", session.state_hash());
    match (score.completed, score.errors.is_empty()) {
        (true, true) => EXIT_OK,
        (true, false) => EXIT_FINDINGS,
        (false, _) => EXIT_INCOMPLETE,
    }
}

pub fn replay(log: &Path, scenario: &str, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let bytes = match std::fs::read(log) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", log.display());
            return EXIT_INPUT;
        }
    };
    let scenario = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    replay_bytes(&bytes, scenario, out, err)
}

/// [`replay`] on log contents already in memory.
pub fn replay_bytes(bytes: &[u8], scenario: Scenario, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Ok(text) = std::str::from_utf8(bytes) else {
        let _ = writeln!(err, "error: log is not valid UTF-8");
        return EXIT_FINDINGS;
    };
    match replay_text(text, scenario) {
        Ok(session) => {
            let _ = writeln!(out, "ok {} ticks={}", session.state_hash(), session.tick());
            EXIT_OK
        }
        Err(e @ ReplayError::IncompatibleLog(_)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FINDINGS
        }
    }
}

pub struct ReportArgs {
    pub profiles: Option<PathBuf>,
    pub times: Option<PathBuf>,
    /// `PATH` for a single-session report, `TESTER=PATH` for cohort input.
    pub logs: Vec<String>,
    pub reference: String,
    pub format: ReportFormat,
}

fn read_log_score(path: &str) -> Result<ScoreReport, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    let events = parse_log(&text).map_err(|e| format!("{path}: {e}"))?;
    score_log(&events).map_err(|e| format!("{path}: {e}"))
}

pub fn report(args: ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match build_report(&args) {
        Ok(bytes) => {
            let _ = out.write_all(&bytes);
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn build_report(args: &ReportArgs) -> Result<Vec<u8>, String> {
    let Some(profiles_path) = &args.profiles else {
        if args.logs.is_empty() {
            return Err("nothing to report: pass --log, or --profiles with --times/--log".into());
        }
        let mut bytes = Vec::new();
        for log in &args.logs {
            let score = read_log_score(log)?;
            bytes.extend(emit_report(ReportRef::Score(&score), args.format));
        }
        return Ok(bytes);
    };

    let profiles = std::fs::File::open(profiles_path)
        .map_err(|e| e.to_string())
        .and_then(|f| load_profiles(f).map_err(|e| e.to_string()))
        .map_err(|e| format!("{}: {e}", profiles_path.display()))?;
    let mut inputs = match &args.times {
        Some(p) => {
            let times = std::fs::File::open(p)
                .map_err(|e| e.to_string())
                .and_then(|f| load_times(f).map_err(|e| e.to_string()))
                .map_err(|e| format!("{}: {e}", p.display()))?;
            cohort_inputs(&profiles, &times).map_err(|e| e.to_string())?
        }
        None => Vec::new(),
    };
    for log in &args.logs {
        let (tester, path) = log
            .split_once('=')
            .ok_or_else(|| format!("`{log}`: cohort logs are given as TESTER=PATH"))?;
        let profile: &TesterProfile = profiles
            .iter()
            .find(|p| p.tester_id.as_str() == tester)
            .ok_or_else(|| format!("tester `{tester}` has no profile"))?;
        let score = read_log_score(path)?;
        inputs.push((profile.clone(), score.scenario_id.as_str().into(), score));
    }
    let cohort = cohort_analysis(&inputs, &args.reference.as_str().into()).map_err(|e| e.to_string())?;
    Ok(emit_report(ReportRef::Cohort(&cohort), args.format))
}
