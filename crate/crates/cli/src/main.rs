//! `joyshare`: serve a live session, run headless experiments, replay logs.
//!
//! Exit codes: 0 success, 1 runtime failure or replay mismatch, 2 bad
//! configuration or usage.

use std::fs;
use std::io::BufWriter;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use joyshare::experiment::{run_experiment, ExperimentConfig};
use joyshare::game::{Course, Status};
use joyshare::osc::{encode_osc, hex_words, OscArg, OscMessage};
use joyshare::replay::{sibling_config, verify_log, ReplayError};
use joyshare::schema::{ControlMessage, GameStateMsg, PlayerId};
use joyshare::server::{Gateway, LiveServer};
use joyshare::session::{records_to_csv, run_scripted, CsvLog, RunConfig, Session, StepOutcome};

#[derive(Parser)]
#[command(name = "joyshare", version, about = "Shared-haptics penguin sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(clap::Args)]
struct SessionOverrides {
    /// Number of player slots (2 to 4)
    #[arg(long = "players")]
    players: Option<u8>,
    /// Haptics mode used outside scenario phases
    #[arg(long, value_enum)]
    haptics: Option<OnOff>,
    /// Seed for latency jitter and agent noise
    #[arg(long)]
    seed: Option<u64>,
    /// Course geometry (TOML with rink, goal and start)
    #[arg(long)]
    course: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a live session over UDP/OSC and the WebSocket bridge
    Serve {
        /// Run config (TOML); defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for session.csv and session.toml
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: SessionOverrides,
        #[arg(long, default_value_t = 9000)]
        port_osc: u16,
        #[arg(long, default_value_t = 9001)]
        port_bridge: u16,
        /// Address to bind both endpoints on
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::UNSPECIFIED))]
        bind: IpAddr,
        /// Stop after this many seconds of wall-clock time
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run a scripted session headless and write its log
    Simulate {
        /// Run config (TOML) with at least two agents
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: SessionOverrides,
    },
    /// Run an experiment and write its report and per-run logs
    Experiment {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Base seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Skip writing per-run logs
        #[arg(long)]
        no_logs: bool,
    },
    /// Re-simulate a log and check it byte for byte
    Replay {
        /// Session log (CSV)
        log: PathBuf,
        /// Run config; defaults to the .toml next to the log
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print golden OSC encodings and check them
    EncodeCheck,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            config,
            out,
            overrides,
            port_osc,
            port_bridge,
            bind,
            duration,
        } => serve(
            config.as_deref(),
            &out,
            &overrides,
            SocketAddr::new(bind, port_osc),
            SocketAddr::new(bind, port_bridge),
            duration,
        ),
        Command::Simulate {
            config,
            out,
            overrides,
        } => simulate(&config, &out, &overrides),
        Command::Experiment {
            config,
            out,
            seed,
            no_logs,
        } => experiment(&config, &out, seed, !no_logs),
        Command::Replay { log, config } => replay(&log, config.as_deref()),
        Command::EncodeCheck => encode_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn load_run(path: Option<&Path>, overrides: &SessionOverrides) -> Result<RunConfig, Failure> {
    let mut run = match path {
        Some(p) => RunConfig::load(p).map_err(config_err)?,
        None => RunConfig::default(),
    };
    if let Some(n) = overrides.players {
        run.session.player_count = n;
    }
    if let Some(h) = overrides.haptics {
        run.session.haptic_enabled = matches!(h, OnOff::On);
    }
    if let Some(seed) = overrides.seed {
        run.session.seed = seed;
    }
    if let Some(path) = &overrides.course {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(config_err)?;
        run.session.course = Course::from_toml_str(&text).map_err(config_err)?;
    }
    run.validate().map_err(config_err)?;
    Ok(run)
}

fn create_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(runtime_err)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime_err)
}

fn serve(
    config: Option<&Path>,
    out: &Path,
    overrides: &SessionOverrides,
    osc: SocketAddr,
    bridge: SocketAddr,
    duration: Option<f64>,
) -> Result<(), Failure> {
    let run = load_run(config, overrides)?;
    let mut session = Session::new(run.session.clone()).map_err(config_err)?;
    for agent in &run.agents {
        session.join_agent(agent).map_err(config_err)?;
    }
    create_dir(out)?;
    write_file(&out.join("session.toml"), &run.to_toml_string())?;
    let csv_path = out.join("session.csv");
    let file = fs::File::create(&csv_path)
        .with_context(|| format!("cannot create {}", csv_path.display()))
        .map_err(runtime_err)?;
    let mut log = CsvLog::new(BufWriter::new(file)).map_err(runtime_err)?;

    let gateway = Gateway::bind(osc, Some(bridge))
        .with_context(|| format!("cannot bind {osc} / {bridge}"))
        .map_err(runtime_err)?;
    info!(
        "serving {} slots: osc {}, bridge ws://{}",
        run.session.player_count,
        gateway.osc_addr().map_err(runtime_err)?,
        gateway.bridge_addr().expect("bridge requested")
    );
    let mut server = LiveServer::new(session, gateway);

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).map_err(runtime_err)?;
    }
    let period = Duration::from_secs_f64(run.session.device_dt());
    let started = Instant::now();
    let mut deadline = started;
    let mut was_paused = None;
    let result = loop {
        if stop.load(Ordering::SeqCst) {
            info!("interrupted");
            break Ok(());
        }
        if duration.is_some_and(|d| started.elapsed().as_secs_f64() >= d) {
            break Ok(());
        }
        let (outcome, records) = match server.tick() {
            Ok(r) => r,
            Err(e) => break Err(runtime_err(e)),
        };
        if let Err(e) = records.iter().try_for_each(|r| log.append(r)) {
            break Err(runtime_err(e));
        }
        let paused = matches!(outcome, StepOutcome::Paused);
        if was_paused != Some(paused) {
            info!(
                "{}",
                if paused {
                    "waiting for at least two players"
                } else {
                    "running"
                }
            );
            was_paused = Some(paused);
        }
        if matches!(outcome, StepOutcome::Finished) {
            info!("scenario finished");
            break Ok(());
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else if now - deadline > Duration::from_millis(250) {
            warn!("tick loop is falling behind real time");
            deadline = now;
        }
    };
    log.flush().map_err(runtime_err)?;
    info!(
        "{} game ticks logged to {}",
        server.session().game_ticks(),
        csv_path.display()
    );
    server.shutdown();
    result
}

fn simulate(config: &Path, out: &Path, overrides: &SessionOverrides) -> Result<(), Failure> {
    let run = load_run(Some(config), overrides)?;
    let records = run_scripted(&run).map_err(config_err)?;
    create_dir(out)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let csv_path = out.join(format!("{stem}.csv"));
    write_file(&csv_path, &records_to_csv(&records))?;
    write_file(&sibling_config(&csv_path), &run.to_toml_string())?;
    let last = records
        .last()
        .map(|r| r.world.status)
        .unwrap_or(Status::Sliding);
    println!(
        "{} game ticks, final status {last}; log {}",
        records.len(),
        csv_path.display()
    );
    Ok(())
}

fn experiment(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    keep_logs: bool,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(config_err)?;
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    let started = Instant::now();
    let output = run_experiment(&cfg, keep_logs).map_err(runtime_err)?;
    create_dir(out)?;
    write_file(&out.join("report.csv"), &output.report.to_csv())?;
    write_file(&out.join("runs.csv"), &output.report.runs_csv())?;
    let table = output.report.summary_table();
    write_file(&out.join("summary.txt"), &table)?;
    if keep_logs {
        let dir = out.join("runs");
        create_dir(&dir)?;
        for artifact in &output.logs {
            let csv_path = dir.join(format!("{}.csv", artifact.name));
            write_file(&csv_path, &artifact.csv)?;
            write_file(&sibling_config(&csv_path), &artifact.run.to_toml_string())?;
        }
    }
    print!("{table}");
    info!(
        "{} runs in {:.2} s, report in {}",
        output.report.runs.len(),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn replay(log_path: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let config_path = config.map_or_else(|| sibling_config(log_path), Path::to_path_buf);
    let run = RunConfig::load(&config_path).map_err(config_err)?;
    let log = fs::read_to_string(log_path)
        .with_context(|| format!("cannot read {}", log_path.display()))
        .map_err(config_err)?;
    match verify_log(&run, &log) {
        Ok(ticks) => {
            println!("ok: {ticks} game ticks reproduced exactly");
            Ok(())
        }
        Err(e @ ReplayError::Config(_)) => Err(config_err(e)),
        Err(e @ ReplayError::Mismatch { .. }) => Err(runtime_err(anyhow!(e))),
    }
}

fn golden_messages() -> Vec<(OscMessage, &'static str)> {
    let p1 = PlayerId::new(1).expect("slot 1 exists");
    vec![
        (
            OscMessage::new("/a", vec![OscArg::Float(1.0)]),
            "2F610000 2C660000 3F800000",
        ),
        (OscMessage::new("/ping", vec![]), "2F70696E 67000000 2C000000"),
        (
            ControlMessage::Stick { player: p1, x: 0.5, y: -0.25 }.to_osc(),
            "2F637472 6C2F312F 73746963 6B000000 2C666600 3F000000 BE800000",
        ),
        (
            ControlMessage::Force { player: p1, fx: 3.0, fy: -3.0 }.to_osc(),
            "2F637472 6C2F312F 666F7263 65000000 2C666600 40400000 C0400000",
        ),
        (
            ControlMessage::GameState(GameStateMsg {
                position: [-6.0, 0.0],
                velocity: [0.0, 0.0],
                status: Status::Sliding,
            })
            .to_osc(),
            "2F67616D 652F7374 61746500 2C666666 66690000 C0C00000 00000000 00000000 00000000 00000000",
        ),
        (
            ControlMessage::Haptics { on: true }.to_osc(),
            "2F736573 73696F6E 2F686170 74696373 00000000 2C690000 00000001",
        ),
    ]
}

fn encode_check() -> Result<(), Failure> {
    let mut mismatches = 0;
    for (msg, expected) in golden_messages() {
        let bytes = encode_osc(&msg).map_err(runtime_err)?;
        let got = hex_words(&bytes).to_uppercase();
        let verdict = if got == expected { "ok" } else { "MISMATCH" };
        println!("{verdict:<8} {msg}\n         {got}");
        if got != expected {
            println!("expected {expected}");
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(runtime_err(anyhow!("{mismatches} golden vectors differ")));
    }
    Ok(())
}
