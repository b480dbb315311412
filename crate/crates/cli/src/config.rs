//! Settings from flags and an optional JSON file; flags win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Deserializer};

use saddle_es::grid::parse_f64_list;

use crate::CliError;

pub const SEED_ENV: &str = "SADDLE_ES_SEED";

/// A list of numbers: `-1,20` on the command line, `[-1, 20]` or `"-1,20"` in JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct NumList(pub Vec<f64>);

impl FromStr for NumList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_f64_list(s).map(NumList).map_err(|e| e.to_string())
    }
}

impl fmt::Display for NumList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|x| format!("{x:?}")).collect();
        f.write_str(&items.join(","))
    }
}

impl<'de> Deserialize<'de> for NumList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(NumList(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Every setting of every subcommand. In a config file the same names are
/// snake_case keys; `command`, if present, must name the subcommand being run.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[arg(skip)]
    #[serde(default)]
    pub command: Option<String>,

    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed; falls back to the config file, then $SADDLE_ES_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Curvatures, e.g. `-1,20`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a: Option<NumList>,
    /// Number of negative curvatures (they come first in `a`).
    #[arg(long, global = true)]
    pub b: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Iteration budget per run.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    #[arg(long, global = true)]
    pub sigma_min: Option<f64>,

    /// Initial mean (run, succ-prob, escape).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub m0: Option<NumList>,
    /// Initial raw step size (run, succ-prob).
    #[arg(long, global = true)]
    pub sigma0: Option<f64>,
    /// `||m~||_-` of the deterministic initial point on M+_0.
    #[arg(long, global = true)]
    pub w: Option<f64>,
    /// Initial normalized step size.
    #[arg(long, global = true)]
    pub sigma_tilde0: Option<f64>,
    /// Keep every k-th trace row plus all acceptances; 1 keeps everything.
    #[arg(long, global = true)]
    pub record_every: Option<u64>,

    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Repeat the escape experiment for sigma~0 in {1e-3, 1e-1, 1, 10}.
    #[arg(long, global = true)]
    #[serde(default)]
    pub sweep: bool,
    /// Survival window `lo,hi` for the tail fit.
    #[arg(long, global = true)]
    pub tail_range: Option<NumList>,

    /// Monte Carlo samples per estimate.
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Grid over w: `lin:0:1:11`, `0:1:11` or `0,0.5,1`.
    #[arg(long, global = true)]
    pub w_grid: Option<String>,
    /// Grid over sigma~: `log:1e-4:1e3:36`, `1e-4:1e3:36` (log) or a list.
    #[arg(long, global = true)]
    pub sigma_grid: Option<String>,
    #[arg(long, global = true)]
    pub confidence: Option<f64>,
    /// Weight of V in Phi.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// V, W or Phi.
    #[arg(long, global = true)]
    pub quantity: Option<String>,
    /// Exit 4 unless every ci_low is positive.
    #[arg(long, global = true)]
    #[serde(default)]
    pub check_positive: bool,
    /// Sphere radii for the pairing check.
    #[arg(long, global = true)]
    pub radii: Option<NumList>,

    /// Grids over the two coordinates for `levels`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x1_grid: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x2_grid: Option<String>,

    /// Main output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Trace CSV of `run`.
    #[arg(long, global = true)]
    pub trace_out: Option<PathBuf>,
    /// Survival CSV of `escape`.
    #[arg(long, global = true)]
    pub survival_out: Option<PathBuf>,
}

macro_rules! fill_from {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl Settings {
    pub fn load_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Settings, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// `self` (flags) overrides `file`.
    pub fn merged_over(mut self, file: Settings) -> Settings {
        fill_from!(self, file;
            threads, seed, a, b, alpha, budget, sigma_min, m0, sigma0, w, sigma_tilde0,
            record_every, trials, tail_range, n, w_grid, sigma_grid, confidence, beta,
            quantity, radii, x1_grid, x2_grid, out, trace_out, survival_out,
        );
        self.sweep |= file.sweep;
        self.check_positive |= file.check_positive;
        self.command = file.command;
        self
    }

    /// Seed from flag or file, else from the environment value, else 0.
    pub fn resolve_seed(&mut self, env: Option<&str>) -> Result<u64, CliError> {
        if self.seed.is_none() {
            if let Some(v) = env {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
                self.seed = Some(seed);
            }
        }
        Ok(*self.seed.get_or_insert(0))
    }
}
