use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drillsim::cli::{self, ReportArgs, RunArgs};
use drillsim::server::{self, ServerConfig};
use drillsim_core::scoring::ReportFormat;

/// Ship fire-drill simulator.
#[derive(Parser)]
#[command(name = "drillsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against the compliance rules.
    Validate {
        /// Scenario file, or a built-in level id (L1..L4).
        #[arg(long)]
        scenario: String,
    },
    /// Run a command script headlessly and print the score.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the event log here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Re-run a session log and check it reproduces exactly.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        scenario: String,
    },
    /// Serve live sessions over WebSocket at /ws.
    Serve {
        /// Directory of scenario files; the built-in levels when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Simulated seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Directory for finished session logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Score logs, or compare a cohort of testers against a reference tester.
    Report {
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// CSV of `tester_id,level,time_s`.
        #[arg(long)]
        times: Option<PathBuf>,
        /// Session log; `TESTER=PATH` when used with --profiles. Repeatable.
        #[arg(long = "log")]
        logs: Vec<String>,
        #[arg(long, default_value = "1")]
        reference: String,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    let code = match cli.command {
        Command::Validate { scenario } => cli::validate(&scenario, &mut out, &mut err),
        Command::Run { scenario, script, seed, out: log_out, format } => cli::run(
            RunArgs {
                scenario: &scenario,
                script: &script,
                seed,
                log_out: log_out.as_deref(),
                format,
            },
            &mut out,
            &mut err,
        ),
        Command::Replay { log, scenario } => cli::replay(&log, &scenario, &mut out, &mut err),
        Command::Report { profiles, times, logs, reference, format } => cli::report(
            ReportArgs { profiles, times, logs, reference, format },
            &mut out,
            &mut err,
        ),
        Command::Serve { scenario, port, bind, time_scale, log_dir } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            serve(scenario, SocketAddr::new(bind, port), time_scale, log_dir)
        }
    };
    ExitCode::from(code as u8)
}

fn serve(dir: Option<PathBuf>, addr: SocketAddr, time_scale: f64, log_dir: Option<PathBuf>) -> i32 {
    let config = match dir {
        Some(d) => ServerConfig::from_dir(&d),
        None => Ok(ServerConfig::builtin()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return cli::EXIT_INPUT;
        }
    };
    if !(time_scale.is_finite() && time_scale > 0.0) {
        eprintln!("error: --time-scale must be positive");
        return cli::EXIT_INPUT;
    }
    config.time_scale = time_scale;
    config.log_dir = log_dir;
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(server::serve(addr, config)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
