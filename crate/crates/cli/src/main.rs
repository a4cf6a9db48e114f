//! `docent`: simulate sessions, print reports, replay traces, check data
//! files and run the session service.

use std::fs;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use docent_core::anchor::AnchorStore;
use docent_core::composer::{ClipLibrary, MappingTable, PhonemeLexicon, VisemeMap};
use docent_core::dialogue::{KnowledgeBase, SentimentLexicon};
use docent_core::fixtures;
use docent_core::fsm::{replay, TraceRecord};
use docent_core::latency::LatencyModel;
use docent_core::orchestrator::EngineConfig;
use docent_core::sim::{self, render_table, Scenario, SimReport};
use docent_service::{AppState, ServiceConfig, DEFAULT_HISTORY_CAP};

#[derive(Debug, Parser)]
#[command(name = "docent", version, about = "Virtual tour-guide engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct EngineArgs {
    /// Engine configuration (TOML); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Latency model (TOML); the calibrated model when absent.
    #[arg(long)]
    latency: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario on the simulated clock and print the timing table.
    Run {
        /// `garden` for the bundled scenario, or a scenario JSON file.
        #[arg(long, default_value = "garden")]
        scenario: String,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Pre-place an anchor on every object.
        #[arg(long)]
        anchored: bool,
        /// Write the full report (JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every session's state-machine trace (NDJSON) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the timing table of a saved report.
    Report { report: PathBuf },
    /// Re-drive a trace log through the state machine and list differences.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a data file; prints one diagnostic line and fails on error.
    Validate {
        kind: FileKind,
        path: PathBuf,
        /// Clip library to check a mapping table against (bundled when absent).
        #[arg(long)]
        clips: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        engine: EngineArgs,
        /// `garden` or a scenario JSON file providing the rooms.
        #[arg(long, default_value = "garden")]
        scenario: String,
        /// Seed for sessions created without one.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_HISTORY_CAP)]
        history_cap: usize,
        /// Factor on the stub recognition endpoint's delay.
        #[arg(long, default_value_t = 1.0)]
        recognize_time_scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileKind {
    Scenario,
    Kb,
    Lexicon,
    Clips,
    Mapping,
    Phonemes,
    Visemes,
    Anchors,
    Config,
    Latency,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_scenario(name: &str) -> Result<Scenario> {
    if name == "garden" {
        return Ok(fixtures::garden_scenario());
    }
    let scenario = Scenario::from_json(&read(Path::new(name))?).with_context(|| format!("scenario {name}"))?;
    Ok(scenario)
}

impl EngineArgs {
    fn load(&self) -> Result<(EngineConfig, LatencyModel)> {
        let mut config = match &self.config {
            Some(path) => EngineConfig::from_toml(&read(path)?).with_context(|| format!("{}", path.display()))?,
            None => EngineConfig::default(),
        };
        config.apply_env()?;
        config.validate()?;
        let latency = match &self.latency {
            Some(path) => LatencyModel::from_toml(&read(path)?).with_context(|| format!("{}", path.display()))?,
            None => LatencyModel::calibrated(),
        };
        Ok((config, latency))
    }
}

fn write_trace(path: &Path, run: &sim::SimRun) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    for record in run.sessions.iter().flat_map(|s| &s.trace) {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn run(scenario: &str, engine: &EngineArgs, seed: u64, anchored: bool, out: Option<&Path>, trace: Option<&Path>) -> Result<()> {
    let mut scenario = load_scenario(scenario)?;
    scenario.anchored |= anchored;
    let (config, latency) = engine.load()?;
    let run = sim::run_detailed(&scenario, &latency, &config, seed)?;
    print!("{}", render_table(&run.report));
    println!("vision calls: {}", run.report.vision_calls);
    if let Some(path) = out {
        fs::write(path, run.report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = trace {
        write_trace(path, &run)?;
    }
    Ok(())
}

fn report(path: &Path) -> Result<()> {
    let report = SimReport::from_json(&read(path)?).with_context(|| format!("{}", path.display()))?;
    println!("scenario {} seed {} anchored {}", report.scenario, report.seed, report.anchored);
    print!("{}", render_table(&report));
    Ok(())
}

fn replay_trace(path: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let config = match config {
        Some(path) => EngineConfig::from_toml(&read(path)?)?,
        None => EngineConfig::default(),
    };
    let text = read(path)?;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: TraceRecord =
            serde_json::from_str(line).with_context(|| format!("{}:{}: not a trace record", path.display(), n + 1))?;
        records.push(record);
    }
    let mismatches = replay(&records, &config.fsm);
    for m in &mismatches {
        println!(
            "record {} ({}): recorded {:?} {:?}, replayed {:?} {:?}",
            m.index, m.session, m.expected.0, m.expected.1, m.got.0, m.got.1
        );
    }
    println!("{} records, {} differences", records.len(), mismatches.len());
    Ok(if mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text).map_err(|e| anyhow::anyhow!("rule json: {e}"))?)
}

fn check(kind: FileKind, text: &str, clips: Option<&Path>) -> Result<()> {
    match kind {
        FileKind::Scenario => {
            let scenario = Scenario::from_json(text)?;
            // Some script errors only show up when the steps run.
            sim::run(&scenario, &LatencyModel::zero(), &EngineConfig::default(), 0)?;
        }
        FileKind::Kb => {
            KnowledgeBase::from_json(text)?;
        }
        FileKind::Lexicon => {
            SentimentLexicon::from_json(text)?;
        }
        FileKind::Clips => parse_json::<ClipLibrary>(text)?.validate()?,
        FileKind::Mapping => {
            let library = match clips {
                Some(path) => parse_json::<ClipLibrary>(&read(path)?)?,
                None => fixtures::performance_assets().clips,
            };
            let table = parse_json::<MappingTable>(text)?;
            MappingTable::new(table.entries, table.default_clip).validate(&library)?;
        }
        FileKind::Phonemes => parse_json::<PhonemeLexicon>(text)?.validate()?,
        FileKind::Visemes => parse_json::<VisemeMap>(text)?.validate()?,
        FileKind::Anchors => {
            AnchorStore::load(text)?;
        }
        FileKind::Config => EngineConfig::from_toml(text)?.validate()?,
        FileKind::Latency => LatencyModel::from_toml(text)?.validate()?,
    }
    Ok(())
}

fn validate(kind: FileKind, path: &Path, clips: Option<&Path>) -> Result<ExitCode> {
    let text = read(path)?;
    match check(kind, &text, clips) {
        Ok(()) => {
            println!("{}: ok", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(error) => {
            eprintln!("{}: {}", path.display(), error.to_string().replace('\n', " "));
            Ok(ExitCode::FAILURE)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn serve(host: &str, port: u16, engine: &EngineArgs, scenario: &str, seed: u64, history_cap: usize, scale: f64) -> Result<()> {
    let (config, latency) = engine.load()?;
    if !(scale >= 0.0 && scale.is_finite()) {
        bail!("recognize time scale must be finite and non-negative");
    }
    let state = AppState::new(ServiceConfig {
        engine: config,
        latency,
        scenario: load_scenario(scenario)?,
        seed,
        history_cap,
        recognize_time_scale: scale,
    })?;
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        docent_service::serve(listener, state).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, engine, seed, anchored, out, trace } => {
            run(scenario, engine, *seed, *anchored, out.as_deref(), trace.as_deref()).map(|()| ExitCode::SUCCESS)
        }
        Command::Report { report: path } => report(path).map(|()| ExitCode::SUCCESS),
        Command::Replay { trace, config } => replay_trace(trace, config.as_deref()),
        Command::Validate { kind, path, clips } => validate(*kind, path, clips.as_deref()),
        Command::Serve { host, port, engine, scenario, seed, history_cap, recognize_time_scale } => {
            serve(host, *port, engine, scenario, *seed, *history_cap, *recognize_time_scale).map(|()| ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|error| {
        eprintln!("error: {error:#}");
        ExitCode::from(2)
    })
}
