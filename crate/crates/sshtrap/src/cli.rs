//! Command-line interface: one binary, six verbs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Reports go
//! to stdout, diagnostics to stderr; everything is non-interactive.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use sshtrap_core::analyzer::{build_report, DetectorParams};
use sshtrap_core::csv;
use sshtrap_core::event::EventLogSnapshot;
use sshtrap_core::geo::{load_geo_db, GeoDatabase};
use sshtrap_core::profile::{parse_profile, AttackProfile};
use sshtrap_core::synth::synthesize_log;

use crate::config::{parse_config_file, CaptureConfig};
use crate::replay::{replay, ReplayOptions};
use crate::report::{builtin_default_credentials, render_json, render_text};
use crate::server::start_listener;
use crate::store::{read_snapshot_file, write_snapshot_file, EventStore};

#[derive(Debug, Parser)]
#[command(
    name = "sshtrap",
    version,
    about = "Low-interaction SSH honeypot with attack forensics and a campaign simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the honeypot listener until interrupted
    Serve(ServeArgs),
    /// Analyze a captured or synthesized event log
    Analyze(AnalyzeArgs),
    /// Synthesize a campaign log from a profile
    Simulate(SimulateArgs),
    /// Replay live credential attempts against a running honeypot
    Replay(ReplayArgs),
    /// Export an event log as CSV
    Export(ExportArgs),
    /// Resolve one IP against a geo database
    GeoCheck(GeoCheckArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// key=value config file; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Address to listen on
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Server version string (no CR/LF)
    #[arg(long)]
    pub banner: Option<String>,
    /// Host key file, generated on first start
    #[arg(long)]
    pub hostkey: Option<PathBuf>,
    /// Userauth attempts tolerated per session
    #[arg(long)]
    pub max_auth_tries: Option<u32>,
    /// Seconds of silence before a session is dropped
    #[arg(long)]
    pub idle_timeout: Option<u64>,
    /// Concurrent session limit
    #[arg(long)]
    pub max_sessions: Option<usize>,
    /// Event log path (default sshtrap_events.bin)
    #[arg(long, env = "SSHTRAP_STORE")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Binary event log to analyze
    #[arg(long, env = "SSHTRAP_STORE")]
    pub store: Option<PathBuf>,
    /// CSV event log to analyze (as produced by export); wins over --store
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Geo database (start_ip,end_ip,country CSV)
    #[arg(long, env = "SSHTRAP_GEO")]
    pub geo: Option<PathBuf>,
    /// Entries in each ranking
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Dictionary-attack window in seconds
    #[arg(long, default_value_t = 60)]
    pub window: u64,
    /// Minimum attempts within the window
    #[arg(long, default_value_t = 10)]
    pub min_attempts: u64,
    /// Minimum distinct passwords within the window
    #[arg(long, default_value_t = 5)]
    pub min_distinct: u64,
    /// Extra default-credential list (username,password CSV)
    #[arg(long)]
    pub defaults: Option<PathBuf>,
    /// Also write the report as JSON to this path
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Campaign profile file
    #[arg(long)]
    pub profile: PathBuf,
    /// Output event log (binary store format)
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the synthesized log as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Honeypot address to attack
    #[arg(long)]
    pub target: SocketAddr,
    /// Campaign profile supplying the credentials
    #[arg(long)]
    pub profile: PathBuf,
    /// Total attempts to send
    #[arg(long, default_value_t = 100)]
    pub scale: u64,
    /// Concurrent connections
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Attempts per connection before reconnecting
    #[arg(long, default_value_t = 6)]
    pub attempts_per_connection: u32,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Binary event log to export
    #[arg(long, env = "SSHTRAP_STORE")]
    pub store: PathBuf,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GeoCheckArgs {
    /// Geo database
    #[arg(long, env = "SSHTRAP_GEO")]
    pub geo: PathBuf,
    /// Address to resolve
    pub ip: IpAddr,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Store(#[from] crate::store::StoreError),
    #[error("{0}")]
    Serve(#[from] crate::server::ServeError),
    #[error("{0}")]
    Replay(#[from] crate::replay::ReplayError),
    #[error("{0}")]
    HostKey(#[from] crate::hostkey::HostKeyError),
    #[error("config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: crate::config::ConfigError,
    },
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("profile {path}: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: sshtrap_core::profile::ProfileError,
    },
    #[error("geo db {path}: {source}")]
    Geo {
        path: PathBuf,
        #[source]
        source: sshtrap_core::geo::GeoError,
    },
    #[error("csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: sshtrap_core::csv::CsvError,
    },
    #[error("analyze needs --store or --csv")]
    NoInput,
    #[error("export to {path} failed after preparing {rows} rows: {source}")]
    ExportWrite {
        path: PathBuf,
        rows: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses argv without exiting, for tests and for main.
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

pub fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Serve(args) => run_serve(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Replay(args) => run_replay(args),
        Command::Export(args) => run_export(args),
        Command::GeoCheck(args) => run_geo_check(args),
    }
}

fn read_file(path: &PathBuf) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::File {
        path: path.clone(),
        source,
    })
}

fn load_profile(path: &PathBuf) -> Result<AttackProfile, RunError> {
    parse_profile(&read_file(path)?).map_err(|source| RunError::Profile {
        path: path.clone(),
        source,
    })
}

fn load_geo(path: &Option<PathBuf>) -> Result<GeoDatabase, RunError> {
    match path {
        None => Ok(GeoDatabase::default()),
        Some(p) => load_geo_db(&read_file(p)?).map_err(|source| RunError::Geo {
            path: p.clone(),
            source,
        }),
    }
}

/// Defaults, overridden by the config file, overridden by flags.
fn resolve_serve_config(args: &ServeArgs) -> Result<(CaptureConfig, PathBuf), RunError> {
    let mut config = CaptureConfig::default();
    let mut store_path = PathBuf::from("sshtrap_events.bin");
    if let Some(path) = &args.config {
        let file = parse_config_file(&read_file(path)?).map_err(|source| RunError::ConfigFile {
            path: path.clone(),
            source,
        })?;
        file.apply(&mut config);
        if let Some(sp) = file.store_path {
            store_path = sp;
        }
    }
    if let Some(sp) = &args.store {
        store_path = sp.clone();
    }
    if let Some(v) = args.bind {
        config.bind = v;
    }
    if let Some(v) = &args.banner {
        config.banner = v.as_bytes().to_vec();
    }
    if let Some(v) = &args.hostkey {
        config.host_key_path = v.clone();
    }
    if let Some(v) = args.max_auth_tries {
        config.max_auth_attempts = v;
    }
    if let Some(v) = args.idle_timeout {
        config.idle_timeout = Duration::from_secs(v);
    }
    if let Some(v) = args.max_sessions {
        config.max_sessions = v;
    }
    config.validate()?;
    Ok((config, store_path))
}

fn run_serve(args: ServeArgs) -> Result<(), RunError> {
    let (config, store_path) = resolve_serve_config(&args)?;

    let (store, report) = EventStore::open(&store_path)?;
    if report.truncated_bytes > 0 {
        eprintln!(
            "sshtrap: recovered {} events, dropped {} bytes of torn tail",
            report.events_recovered, report.truncated_bytes
        );
    } else if report.events_recovered > 0 {
        eprintln!(
            "sshtrap: store has {} events (high water seq {})",
            report.events_recovered,
            store.high_water()
        );
    }

    let seed = crate::hostkey::load_or_generate(&config.host_key_path)?;
    let handle = start_listener(config.clone(), store.clone())?;
    eprintln!(
        "sshtrap: listening on {} (host key {})",
        handle.local_addr(),
        crate::hostkey::fingerprint(&seed)
    );
    eprintln!("sshtrap: press Ctrl-C to stop");

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst));
    }
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    eprintln!("sshtrap: interrupt received, draining sessions");
    handle.shutdown();
    eprintln!(
        "sshtrap: stopped; store holds {} events",
        store.high_water()
    );
    Ok(())
}

fn load_snapshot(args: &AnalyzeArgs) -> Result<EventLogSnapshot, RunError> {
    match (&args.store, &args.csv) {
        (_, Some(path)) => {
            let text = read_file(path)?;
            csv::parse_events(&text).map_err(|source| RunError::Csv {
                path: path.clone(),
                source,
            })
        }
        (Some(path), None) => {
            let (snapshot, report) = read_snapshot_file(path)?;
            if report.truncated_bytes > 0 {
                eprintln!(
                    "sshtrap: note: log has a torn tail ({} bytes ignored)",
                    report.truncated_bytes
                );
            }
            Ok(snapshot)
        }
        (None, None) => Err(RunError::NoInput),
    }
}

fn run_analyze(args: AnalyzeArgs) -> Result<(), RunError> {
    let snapshot = load_snapshot(&args)?;
    let geo = load_geo(&args.geo)?;
    let mut defaults = builtin_default_credentials();
    if let Some(path) = &args.defaults {
        let extra =
            csv::parse_credential_list(&read_file(path)?).map_err(|source| RunError::Csv {
                path: path.clone(),
                source,
            })?;
        defaults.extend(extra);
    }
    let params = DetectorParams {
        window_seconds: args.window,
        min_attempts: args.min_attempts,
        min_distinct: args.min_distinct,
    };
    let report = build_report(&snapshot, &geo, &params, &defaults, args.top.max(1));
    print!("{}", render_text(&report));
    if let Some(path) = &args.json {
        let value = render_json(&report);
        std::fs::write(path, format!("{:#}\n", value)).map_err(|source| RunError::File {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<(), RunError> {
    let profile = load_profile(&args.profile)?;
    let snapshot = synthesize_log(&profile);
    write_snapshot_file(&args.out, &snapshot)?;
    if let Some(path) = &args.csv {
        let (text, _) = csv::write_events(&snapshot);
        std::fs::write(path, text).map_err(|source| RunError::File {
            path: path.clone(),
            source,
        })?;
    }
    eprintln!(
        "sshtrap: synthesized {} events over {} sessions into {}",
        snapshot.events.len(),
        snapshot.sessions.len(),
        args.out.display()
    );
    Ok(())
}

fn run_replay(args: ReplayArgs) -> Result<(), RunError> {
    let profile = load_profile(&args.profile)?;
    let options = ReplayOptions {
        target: args.target,
        scale: args.scale,
        parallel: args.parallel,
        attempts_per_connection: args.attempts_per_connection,
        ..ReplayOptions::default()
    };
    let summary = replay(&profile, &options)?;
    println!("attempts_sent: {}", summary.attempts_sent);
    println!("attempts_acknowledged: {}", summary.attempts_acknowledged);
    println!("sessions_opened: {}", summary.sessions_opened);
    Ok(())
}

fn run_export(args: ExportArgs) -> Result<(), RunError> {
    let (snapshot, report) = read_snapshot_file(&args.store)?;
    if report.truncated_bytes > 0 {
        eprintln!(
            "sshtrap: note: log has a torn tail ({} bytes ignored)",
            report.truncated_bytes
        );
    }
    let (text, rows) = csv::write_events(&snapshot);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|source| RunError::ExportWrite {
            path: path.clone(),
            rows,
            source,
        })?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    eprintln!("sshtrap: exported {rows} rows");
    Ok(())
}

fn run_geo_check(args: GeoCheckArgs) -> Result<(), RunError> {
    let geo = load_geo(&Some(args.geo))?;
    match geo.resolve(args.ip) {
        Some(country) => println!("{} {}", args.ip, country),
        None => println!("{} unknown", args.ip),
    }
    Ok(())
}
