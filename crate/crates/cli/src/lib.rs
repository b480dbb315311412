//! Command-line front end for `saddle-es`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 censored (budget exhausted
//! before escape), 3 step-size underflow, 4 failed check or estimation bound.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{NumList, Settings, SEED_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CENSORED: i32 = 2;
pub const EXIT_UNDERFLOW: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] saddle_es::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use saddle_es::Error as E;
        match self {
            CliError::Core(
                E::NonPositiveDriftBound { .. } | E::Sigma40BelowGrid { .. } | E::SigmaStarBelowGrid { .. },
            ) => EXIT_CHECK_FAILED,
            _ => EXIT_CONFIG,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "saddle-es", version, about = "(1+1)-ES on quadratic saddle points")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub settings: Settings,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Single seeded run: summary JSON, optional trace CSV.
    Run,
    /// Escape-time experiment: hitting-time statistics JSON, optional survival CSV.
    Escape,
    /// Drift map over the (w, sigma~) grid as CSV.
    DriftMap,
    /// Drift constants as JSON.
    Constants,
    /// Success probability at one state.
    SuccProb,
    /// Mirror-pairing check of the W-drift construction.
    Pairing,
    /// f and region labels on a 2-D point grid as CSV.
    Levels,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Escape => "escape",
            Command::DriftMap => "drift-map",
            Command::Constants => "constants",
            Command::SuccProb => "succ-prob",
            Command::Pairing => "pairing",
            Command::Levels => "levels",
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Output goes to `--out` or `stdout`; diagnostics to `stderr`.
pub fn main_with<I, T>(args: I, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli, env_seed, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let mut settings = match &cli.config {
        Some(path) => cli.settings.merged_over(Settings::load_file(path)?),
        None => cli.settings,
    };
    if let Some(name) = &settings.command {
        if name != cli.command.name() {
            return Err(CliError::Config(format!(
                "config file is for `{name}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    settings.resolve_seed(env_seed)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    match settings.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(k) => pool = pool.num_threads(k),
        None => {}
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    // Writers are not Send; buffer inside the pool and copy out.
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let result = pool.install(|| commands::dispatch(cli.command, &settings, &mut out, &mut err));
    stdout.write_all(&out)?;
    stderr.write_all(&err)?;
    result
}
