//! `edgeform run | certify | scenarios`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edgeform::backends::{EndpointConfig, LlmBackend, RuleBackend, SupervisorBackend, Transport};
use edgeform::scenario::{builtin_scenarios, scenario, ScenarioConfig};
use edgeform::theory::{certify_run, BoundReport, CertifyParams};

use crate::artifacts::RunArtifacts;
use crate::server::{serve, ServeOptions};
use crate::session::Session;
use crate::StationError;

#[derive(Debug, Parser)]
#[command(name = "edgeform", version, about = "Supervised multi-drone formation missions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run a mission headless, or live behind the WebSocket control station.
    Run(RunArgs),
    /// Recompute and print the bound report of a finished run directory.
    Certify { run_dir: PathBuf },
    /// List the built-in missions.
    Scenarios,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Rule,
    Llm,
    Replay,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in mission name or path to a scenario JSON file.
    pub scenario: String,
    /// Run to completion without a network listener (the default).
    #[arg(long, conflicts_with = "serve")]
    pub headless: bool,
    /// Serve the live session on this address, e.g. 127.0.0.1:8765.
    #[arg(long, value_name = "ADDR")]
    pub serve: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "S")]
    pub dt: Option<f64>,
    #[arg(long, value_name = "S")]
    pub check_interval: Option<f64>,
    #[arg(long, value_enum, default_value_t = BackendKind::Rule)]
    pub backend: BackendKind,
    /// Run directory; defaults to runs/<scenario>-seed<N>.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Recording read by `--backend replay` and written by `--backend llm`; defaults to <out>/llm_replay.jsonl.
    #[arg(long, value_name = "FILE")]
    pub replay_file: Option<PathBuf>,
    /// Live mode: simulated seconds per wall-clock second, clamped to [0.1, 100].
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// Live mode: wait for a resume or step control before simulating.
    #[arg(long)]
    pub paused: bool,
}

/// Resolves a built-in name or a JSON file and applies the overrides.
pub fn load_scenario(
    name_or_path: &str,
    seed: Option<u64>,
    dt: Option<f64>,
    check_interval: Option<f64>,
) -> Result<ScenarioConfig, StationError> {
    let path = Path::new(name_or_path);
    let mut config = if path.is_file() { ScenarioConfig::load(path)? } else { scenario(name_or_path)? };
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    Ok(config.with_timing(dt, check_interval)?)
}

pub fn default_out(config: &ScenarioConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-seed{}", config.name, config.seed))
}

pub fn make_backend(kind: BackendKind, replay_file: &Path) -> Result<Box<dyn SupervisorBackend>, StationError> {
    Ok(match kind {
        BackendKind::Rule => Box::new(RuleBackend),
        BackendKind::Llm => {
            if let Some(dir) = replay_file.parent() {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(LlmBackend::new(Transport::record(EndpointConfig::from_env()?, replay_file)?))
        }
        BackendKind::Replay => Box::new(LlmBackend::new(Transport::replay(replay_file)?)),
    })
}

fn report_run(out: &Path, artifacts: Option<&RunArtifacts>) {
    println!("run directory: {}", out.display());
    if let Some(a) = artifacts {
        let m = &a.metrics;
        if let Some(t) = m.time_to_detection {
            println!("time to detection: {t:.1} s, waypoint reassignments: {}", m.reassignments);
        }
        if !m.final_shapes.is_empty() {
            println!("final groups: {:?} {:?}", m.final_group_sizes, m.final_shapes);
        }
        println!("{}", a.report.verdict_line());
    }
}

pub fn run_headless(config: ScenarioConfig, backend: Box<dyn SupervisorBackend>, out: &Path) -> Result<Session, StationError> {
    let mut session = Session::new(config, backend, Some(out.to_path_buf()))?;
    session.start()?;
    session.run_to_end()?;
    Ok(session)
}

fn run(args: RunArgs) -> Result<(), StationError> {
    let config = load_scenario(&args.scenario, args.seed, args.dt, args.check_interval)?;
    let out = args.out.clone().unwrap_or_else(|| default_out(&config));
    let replay = args.replay_file.clone().unwrap_or_else(|| out.join("llm_replay.jsonl"));
    let backend = make_backend(args.backend, &replay)?;
    let session = match &args.serve {
        None => run_headless(config, backend, &out)?,
        Some(addr) => {
            let session = Session::new(config, backend, Some(out.clone()))?;
            let options = ServeOptions { time_scale: args.time_scale, start_paused: args.paused, ..ServeOptions::default() };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let server = serve(session, addr, options).await?;
                println!("serving ws://{}/ws", server.local_addr());
                server.wait().await
            })?
        }
    };
    report_run(&out, session.artifacts());
    Ok(())
}

pub fn certify(dir: &Path) -> Result<BoundReport, StationError> {
    Ok(certify_run(dir, &CertifyParams::default())?)
}

pub fn list_scenarios() -> String {
    builtin_scenarios()
        .iter()
        .map(|c| format!("{:<8} {:>4} s  {}\n", c.name, c.duration, c.description))
        .collect()
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        CliCommand::Scenarios => {
            print!("{}", list_scenarios());
            Ok(ExitCode::SUCCESS)
        }
        CliCommand::Run(args) => run(args).map(|_| ExitCode::SUCCESS),
        CliCommand::Certify { run_dir } => certify(&run_dir).map(|r| {
            println!("{}", r.verdict_line());
            if r.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_run_line() {
        let cli = Cli::try_parse_from([
            "edgeform", "run", "chase-1", "--seed", "3", "--dt", "0.005", "--check-interval", "1", "--backend", "replay",
            "--out", "x",
        ])
        .unwrap();
        let CliCommand::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!((a.seed, a.dt, a.backend), (Some(3), Some(0.005), BackendKind::Replay));
        assert!(Cli::try_parse_from(["edgeform", "run", "chase-1", "--headless", "--serve", "0.0.0.0:1"]).is_err());
        assert!(Cli::try_parse_from(["edgeform", "certify"]).is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = load_scenario("sar-1", Some(11), Some(0.005), None).unwrap();
        assert_eq!((c.seed, c.supervisor.seed, c.dt), (11, 11, 0.005));
        assert!(load_scenario("nowhere", None, None, None).is_err());
        assert_eq!(list_scenarios().lines().count(), 6);
    }
}
