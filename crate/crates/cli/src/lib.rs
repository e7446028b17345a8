//! `ringlab`: operator command line over the simulated ring environment.
//!
//! Each invocation rebuilds the environment from `--env`/`--rings` and
//! `--seed`, so identical invocations produce identical output.

mod commands;
mod table;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ringlab_core::hostkit::{ExportFormat, HostError, HrCondition};
use ringlab_core::ringsim::ScenarioError;
use ringlab_core::transport::EnvError;

pub use table::{Format, Table};

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Environment file describing the link and the rings in range.
    #[arg(long, global = true, env = "RINGLAB_ENV")]
    pub env: Option<PathBuf>,
    /// Overrides the environment seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of resting rings when no environment file is given.
    #[arg(long, global = true, default_value_t = 1)]
    pub rings: usize,
    /// Output directory for exports and downloads.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Parser)]
#[command(name = "ringlab", version, about = "Simulated smart-ring acquisition workbench")]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportArg {
    Csv,
    Bin,
}

impl From<ExportArg> for ExportFormat {
    fn from(a: ExportArg) -> Self {
        match a {
            ExportArg::Csv => ExportFormat::Csv,
            ExportArg::Bin => ExportFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Clean,
    NoisyWalk,
}

impl From<NoiseArg> for HrCondition {
    fn from(a: NoiseArg) -> Self {
        match a {
            NoiseArg::Clean => HrCondition::Clean,
            NoiseArg::NoisyWalk => HrCondition::NoisyWalk,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Spawn virtual rings and run them until interrupted.
    Sim {
        /// One ring per scenario file, added to the environment.
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        /// Write the resulting environment file and continue.
        #[arg(long)]
        write_env: Option<PathBuf>,
        /// Stop after this many virtual seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Virtual seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Virtual seconds between status lines.
        #[arg(long, default_value_t = 10.0)]
        report_every: f64,
    },
    /// List advertising rings, strongest first.
    Scan {
        #[arg(long, default_value_t = 1000)]
        scan_ms: u64,
    },
    /// Device dashboard.
    Info { mac: String },
    /// Measure and trim the ring clock.
    Calibrate { mac: String },
    /// Record a timed online session.
    Stream {
        mac: String,
        /// Virtual seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Sensor configuration file; defaults to all sensors at full rate.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ExportArg::Csv)]
        export: ExportArg,
        /// `SECONDS:TAG`, session-relative; repeatable.
        #[arg(long = "annotate")]
        annotations: Vec<String>,
        /// Calibrate before streaming.
        #[arg(long)]
        calibrate: bool,
    },
    /// Stream in real time and tag events typed on stdin, one per line.
    /// A line `@SECONDS TAG` tags a session-relative time instead.
    Annotate {
        mac: String,
        /// Virtual seconds; without it the session runs until stdin closes.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ExportArg::Csv)]
        export: ExportArg,
    },
    /// Arm an offline recording and run it to completion.
    Offline {
        mac: String,
        /// Total seconds.
        #[arg(long)]
        total: u32,
        /// Seconds per segment file.
        #[arg(long)]
        segment: u32,
        /// Seconds before logging starts.
        #[arg(long, default_value_t = 0)]
        delay: u32,
        /// Download every segment into `--out` afterwards.
        #[arg(long)]
        fetch: bool,
        #[arg(long, value_enum, default_value_t = ExportArg::Csv)]
        export: ExportArg,
    },
    /// List segment files on the ring.
    Files { mac: String },
    /// Download one segment file.
    Fetch {
        mac: String,
        id: u16,
        /// Continue from a saved partial download.
        #[arg(long)]
        resume: bool,
    },
    /// Score heart-rate tracking against scenario ground truth.
    HrEval {
        /// Single scenario file instead of the seeded benchmark.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        noise: Option<NoiseArg>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Virtual seconds per trial.
        #[arg(long, default_value_t = 60)]
        duration: u32,
    },
    /// Serve the HTTP API and console.
    Gateway {
        #[arg(long, env = ringlab_gateway::PORT_ENV, default_value_t = ringlab_gateway::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Static console assets.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl From<io::Error> for CliError {
    fn from(source: io::Error) -> Self {
        CliError::Io { context: "output".into(), source }
    }
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Env(_) => "Environment",
            CliError::Scenario(_) => "Scenario",
            CliError::Host(e) => e.code(),
            CliError::Io { .. } => "Io",
        }
    }

    /// 0 ok, 1 other, 2 usage, 3 device or link, 4 integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Env(_) | CliError::Scenario(_) => 2,
            CliError::Host(HostError::BadArgument(_)) => 2,
            CliError::Host(e) if e.is_integrity() => 4,
            CliError::Host(HostError::Io(_)) | CliError::Io { .. } => 1,
            CliError::Host(_) => 3,
        }
    }
}

/// One line on the diagnostic stream, e.g.
/// `error code=CrcMismatch exit=4 message="..."`.
pub fn error_line(e: &CliError) -> String {
    format!("error code={} exit={} message={:?}", e.code(), e.exit_code(), e.to_string())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Parse `argv`, run the subcommand and return the process exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            let msg = e.kind().to_string();
            let _ = writeln!(err, "{}", error_line(&CliError::Usage(msg)));
            return 2;
        }
    };
    init_logging(cli.config.verbose);
    match commands::dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(err, "{}", error_line(&e));
            e.exit_code()
        }
    }
}
