//! `ocsis` command line.
//!
//! Exit status: 0 success, 1 diagnostics reported (invalid input, replay
//! divergence), 2 usage error, 3 runtime failure (unreadable file, bind
//! failure).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use log::info;
use ocsis_core::dsl::{self, canonical_format, lint, parse_sources, ProcedureSet, Severity};
use ocsis_core::engine::{PerfConfig, Session, SessionConfig};
use ocsis_core::model::ProcedureId;
use ocsis_core::perf::{corrected_performance, load_correction_table, PerfInput};
use ocsis_core::scenario::{self, load_scenario, parse_trace, run_headless, trace_to_text, ReplayError};
use ocsis_feed::{ServeConfig, DEFAULT_PORT};
use serde::Deserialize;

const DEFAULT_VREF: f64 = 130.0;
const DEFAULT_LANDING_DISTANCE: f64 = 1500.0;

#[derive(Parser)]
#[command(name = "ocsis", version, about = "Context-sensitive cockpit procedure engine")]
struct Cli {
    /// TOML file with default values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and lint procedure files; diagnostics go to standard error.
    Validate {
        /// Files or directories (`.ocsr`, `.ocsp`, `.ocsc`).
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print the canonical form of a procedure set.
    Fmt {
        #[arg(long)]
        procedures: Option<PathBuf>,
    },
    /// Run a scenario headless and print its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        procedures: Option<PathBuf>,
        /// Write the trace here instead of standard output.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        perf: PerfArgs,
    },
    /// Re-execute a trace and check that it reproduces exactly.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        procedures: Option<PathBuf>,
        #[command(flatten)]
        perf: PerfArgs,
    },
    /// Serve a live session to a simulator feed and display clients.
    Serve {
        #[arg(long)]
        procedures: Option<PathBuf>,
        /// Timeline to play back into the session.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, env = "OCSIS_PORT")]
        port: Option<u32>,
        #[arg(long)]
        bind: Option<String>,
        /// Playback ticks per second; 0 waits for `step` frames.
        #[arg(long)]
        tick_rate: Option<f64>,
        /// Append the session trace to this file.
        #[arg(long)]
        trace_log: Option<PathBuf>,
        #[command(flatten)]
        perf: PerfArgs,
    },
    /// Corrected approach speed and landing distance.
    Perf {
        #[arg(long)]
        corrections: PathBuf,
        #[arg(long)]
        vref: Option<f64>,
        #[arg(long)]
        landing_distance: Option<f64>,
        /// Active failures (procedure ids).
        failures: Vec<String>,
    },
}

#[derive(clap::Args, Default)]
struct PerfArgs {
    /// Correction table; defaults to the `.ocsc` file next to the procedures.
    #[arg(long)]
    corrections: Option<PathBuf>,
    /// Reference approach speed, knots.
    #[arg(long)]
    vref: Option<f64>,
    /// Reference landing distance, meters.
    #[arg(long)]
    landing_distance: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Config {
    procedures: Option<PathBuf>,
    port: Option<u32>,
    bind: Option<String>,
    tick_rate: Option<f64>,
    vref: Option<f64>,
    landing_distance: Option<f64>,
    log: Option<String>,
}

enum Failure {
    /// Already reported on standard error.
    Diagnostics,
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(f) => return report(Err(f)),
    };
    let filter = config.log.clone().unwrap_or_else(|| "warn".into());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter)).init();

    report(dispatch(cli.command, &config))
}

fn report(outcome: Outcome) -> ExitCode {
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diagnostics) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

/// A missing file is a runtime failure; bad contents are a usage error.
fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("parsing {}: {e}", path.display())))
}

fn dispatch(command: Command, config: &Config) -> Outcome {
    match command {
        Command::Validate { paths } => validate(&paths),
        Command::Fmt { procedures } => {
            let dir = procedures_dir(procedures, config)?;
            let set = load_set(&dir)?;
            print!("{}", canonical_format(&set));
            Ok(())
        }
        Command::Run { scenario, procedures, trace, perf } => {
            let dir = procedures_dir(procedures, config)?;
            let set = load_set(&dir)?;
            let session_config = session_config(&perf, &dir, config)?;
            let text = read(&scenario)?;
            let sc = load_scenario(&text, &set.registry).map_err(|e| {
                eprintln!("{}: {e}", scenario.display());
                Failure::Diagnostics
            })?;
            let records = run_headless(&sc, &set, &session_config).map_err(|e| Failure::Runtime(e.into()))?;
            let out = trace_to_text(&records);
            match trace {
                Some(path) => fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(out.as_bytes()).context("writing trace")?,
            }
            Ok(())
        }
        Command::Replay { trace, procedures, perf } => {
            let dir = procedures_dir(procedures, config)?;
            let set = load_set(&dir)?;
            let session_config = session_config(&perf, &dir, config)?;
            let records = parse_trace(&read(&trace)?).map_err(|e| {
                eprintln!("{}: {e}", trace.display());
                Failure::Diagnostics
            })?;
            match scenario::replay(&records, &set, &session_config) {
                Ok(r) => {
                    println!(
                        "{}: ok ({} states, {} commands, {} events)",
                        trace.display(),
                        r.states,
                        r.commands,
                        r.events
                    );
                    Ok(())
                }
                Err(e @ (ReplayError::Diverged(_) | ReplayError::BadRecord { .. })) => {
                    eprintln!("{}: {e}", trace.display());
                    Err(Failure::Diagnostics)
                }
                Err(ReplayError::Engine(e)) => Err(Failure::Runtime(e.into())),
            }
        }
        Command::Serve { procedures, scenario, port, bind, tick_rate, trace_log, perf } => {
            let dir = procedures_dir(procedures, config)?;
            let set = load_set(&dir)?;
            let session_config = session_config(&perf, &dir, config)?;
            let playback = match scenario {
                Some(path) => Some(load_scenario(&read(&path)?, &set.registry).map_err(|e| {
                    eprintln!("{}: {e}", path.display());
                    Failure::Diagnostics
                })?),
                None => None,
            };
            let port = port.or(config.port).unwrap_or(u32::from(DEFAULT_PORT));
            let port = u16::try_from(port).map_err(|_| Failure::Runtime(anyhow!("invalid port {port}")))?;
            let tick_rate = tick_rate.or(config.tick_rate).unwrap_or(1.0);
            if !(tick_rate.is_finite() && tick_rate >= 0.0) {
                return Err(Failure::Usage(format!("tick rate must be >= 0, got {tick_rate}")));
            }
            let host = bind.or_else(|| config.bind.clone()).unwrap_or_else(|| "127.0.0.1".into());
            let trace: Option<Box<dyn Write + Send>> = match trace_log {
                Some(p) => Some(Box::new(
                    fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&p)
                        .with_context(|| format!("opening {}", p.display()))?,
                )),
                None => None,
            };
            let session = Session::new(set, session_config).map_err(|e| Failure::Runtime(e.into()))?;
            let handle = ocsis_feed::serve(
                session,
                ServeConfig { addr: format!("{host}:{port}"), tick_rate, playback, trace },
            )
            .with_context(|| format!("binding {host}:{port}"))?;
            // parents waiting for readiness read this line
            println!("listening on {}", handle.local_addr());
            let _ = std::io::stdout().flush();
            info!("serving");
            handle.wait();
            Ok(())
        }
        Command::Perf { corrections, vref, landing_distance, failures } => {
            let table = load_correction_table(&read(&corrections)?).map_err(|e| {
                eprintln!("{}: {e}", corrections.display());
                Failure::Diagnostics
            })?;
            let active_failures = failures
                .iter()
                .map(|f| ProcedureId::new(f.clone()).map_err(|e| Failure::Usage(e.to_string())))
                .collect::<Result<_, _>>()?;
            let input = PerfInput {
                vref: vref.or(config.vref).unwrap_or(DEFAULT_VREF),
                reference_landing_distance: landing_distance
                    .or(config.landing_distance)
                    .unwrap_or(DEFAULT_LANDING_DISTANCE),
                active_failures,
            };
            let r = corrected_performance(&input, &table).map_err(|e| {
                eprintln!("error: {e}");
                Failure::Diagnostics
            })?;
            println!("VAPP {:.1} kt", r.vapp);
            println!("LDG_DIST {:.1} m", r.landing_distance);
            Ok(())
        }
    }
}

fn procedures_dir(flag: Option<PathBuf>, config: &Config) -> Result<PathBuf, Failure> {
    flag.or_else(|| config.procedures.clone())
        .ok_or_else(|| Failure::Usage("no procedure set given (use --procedures or the config file)".into()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Runtime)
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(dsl::set_files(p).with_context(|| format!("listing {}", p.display()))?);
            out.extend(correction_files(p)?);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Failure::Runtime(anyhow!("{}: no such file or directory", p.display())));
        }
    }
    Ok(out)
}

fn correction_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ocsc"))
        .collect();
    out.sort();
    Ok(out)
}

fn validate(paths: &[PathBuf]) -> Outcome {
    let files = expand(paths)?;
    let (tables, set_files): (Vec<PathBuf>, Vec<PathBuf>) =
        files.into_iter().partition(|p| p.extension().is_some_and(|e| e == "ocsc"));
    let mut failed = false;
    for t in &tables {
        if let Err(e) = load_correction_table(&read(t)?) {
            eprintln!("{}: ERROR {e}", t.display());
            failed = true;
        }
    }
    if !set_files.is_empty() {
        let sources = dsl::read_sources(&set_files).context("reading procedures")?;
        let diagnostics = match parse_sources(&sources) {
            Ok(set) => lint(&set),
            Err(d) => d,
        };
        for d in &diagnostics {
            eprintln!("{d}");
        }
        failed |= diagnostics.iter().any(|d| d.severity == Severity::Error);
    }
    if failed {
        Err(Failure::Diagnostics)
    } else {
        Ok(())
    }
}

/// Parses the set; any ERROR diagnostic is printed and fails the command.
fn load_set(dir: &Path) -> Result<ProcedureSet, Failure> {
    let files = if dir.is_dir() {
        dsl::set_files(dir).with_context(|| format!("listing {}", dir.display()))?
    } else if dir.exists() {
        vec![dir.to_path_buf()]
    } else {
        return Err(Failure::Runtime(anyhow!("{}: no such file or directory", dir.display())));
    };
    let sources = dsl::read_sources(&files).context("reading procedures")?;
    parse_sources(&sources).map_err(|diagnostics| {
        for d in &diagnostics {
            eprintln!("{d}");
        }
        Failure::Diagnostics
    })
}

fn session_config(perf: &PerfArgs, dir: &Path, config: &Config) -> Result<SessionConfig, Failure> {
    let table = match &perf.corrections {
        Some(p) => Some(p.clone()),
        None if dir.is_dir() => correction_files(dir)?.into_iter().next(),
        None => None,
    };
    let Some(table) = table else {
        return Ok(SessionConfig::default());
    };
    let corrections = load_correction_table(&read(&table)?).map_err(|e| {
        eprintln!("{}: {e}", table.display());
        Failure::Diagnostics
    })?;
    Ok(SessionConfig {
        perf: Some(PerfConfig {
            vref: perf.vref.or(config.vref).unwrap_or(DEFAULT_VREF),
            reference_landing_distance: perf
                .landing_distance
                .or(config.landing_distance)
                .unwrap_or(DEFAULT_LANDING_DISTANCE),
            corrections,
        }),
    })
}
