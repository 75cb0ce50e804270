//! Command dispatch for the `boussinesq` binary.
//!
//! Every run resolves a [`RunConfig`] (file, then flag overrides), writes it to
//! `<out>/<digest>/config.toml` and puts the subcommand's outputs next to it.
//! Exit status is 0 on success, 1 when an experiment verdict fails or the run
//! errors, 2 on a usage or configuration error.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use boussinesq_core::{parse_config, Error, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::Outcome;

pub const WORKERS_ENV: &str = "BOUSSINESQ_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "boussinesq",
    version,
    about = "Stochastic 2D Boussinesq system with degenerate Levy forcing"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output root; results go under `<DIR>/<digest>/`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
    /// Horizon of the subcommand's main run.
    #[arg(long = "T", global = true, value_name = "T")]
    pub horizon: Option<f64>,
    /// Forced modes, e.g. "(1,0),(0,1)".
    #[arg(long = "Z", global = true, value_name = "MODES")]
    pub forcing: Option<String>,
    /// Truncation level for span and Malliavin runs.
    #[arg(long = "N", global = true, value_name = "N")]
    pub big_n: Option<u32>,
    /// Stopping-time threshold.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Probe {
    Invariant,
    Eproperty,
    Irreducibility,
    All,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// One trajectory: series, jumps, subordinator path and snapshots.
    Simulate,
    /// Forward/backward Malliavin consistency and the min-eigenvalue probe.
    Malliavin,
    /// Symbolic bracket identities against numerical Lie brackets.
    Brackets,
    /// Span certificate for the forced modes.
    Span,
    /// Invariant-measure, e-property and irreducibility probes.
    Ergodicity {
        #[arg(long, value_enum, default_value_t = Probe::All)]
        probe: Probe,
    },
    /// Moment bound and stopping-time moment.
    Moments,
    /// Pathwise energy balance of the temperature.
    Audit,
}

/// Parses `"(1,0),(0,1)"` into mode pairs.
pub fn parse_modes(text: &str) -> Result<Vec<[i32; 2]>, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("no modes given".into());
    }
    let mut out = Vec::new();
    let mut rest = compact.as_str();
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.split_once(')'))
            .ok_or_else(|| format!("expected \"(k1,k2)\" at {rest:?}"))?;
        let (pair, tail) = inner;
        let (a, b) = pair
            .split_once(',')
            .ok_or_else(|| format!("expected two components in ({pair})"))?;
        let parse = |s: &str| s.parse::<i32>().map_err(|_| format!("bad integer {s:?}"));
        out.push([parse(a)?, parse(b)?]);
        rest = tail.strip_prefix(',').unwrap_or(tail);
        if tail.starts_with(',') && rest.is_empty() {
            return Err("trailing comma".into());
        }
    }
    Ok(out)
}

/// Reads the config file and applies flag overrides for `command`.
pub fn resolve_config(common: &CommonArgs, command: &Command) -> boussinesq_core::Result<RunConfig> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(z) = &common.forcing {
        let modes = parse_modes(z).map_err(|e| Error::ConfigInvalid(format!("--Z: {e}")))?;
        cfg.noise.alpha = vec![[1.0, 1.0]; modes.len()];
        cfg.noise.modes = modes;
    }
    if let Some(n) = common.big_n {
        cfg.span.big_n = n;
        cfg.malliavin.probe.big_n = n;
    }
    if let Some(k) = common.kappa {
        cfg.moments.stopping.kappa = k;
        cfg.malliavin.probe.kappa = k;
    }
    if let Some(t) = common.horizon {
        match command {
            Command::Simulate => cfg.simulate.t = t,
            Command::Audit => cfg.audit.t = t,
            Command::Moments => cfg.moments.t_max = t,
            Command::Ergodicity { .. } => cfg.ergodicity.invariant.t_long = t,
            Command::Malliavin | Command::Brackets | Command::Span => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_workers(cfg: &RunConfig) {
    let from_env = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    let n = from_env.unwrap_or(cfg.workers);
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match resolve_config(&cli.common, &cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    init_workers(&cfg);
    match commands::run(&cfg, &cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary());
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
