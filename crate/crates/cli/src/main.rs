mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, ConfigError, KEYS};

/// Label-free harmful shift detection.
#[derive(Debug, Parser)]
#[command(name = "harmwatch", version, about)]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate the selector on labeled source data and write the grid report.
    Calibrate,
    /// Calibrate, then monitor a production CSV (or `-` for stdin) row by row.
    /// Exits with status 2 once an alarm is raised.
    Monitor,
    /// Enumerate feature-split scenarios and write their production streams.
    Simulate,
    /// Run the full shift suite and write suite metrics.
    Evaluate,
    /// Run the shift suite and tabulate power/FDP over tolerance grids.
    Sweep,
}

/// Overrides for config keys. Every flag maps to the key of the same name
/// with dashes turned into underscores.
#[derive(Debug, Args)]
struct Flags {
    #[arg(long, global = true)]
    source: Option<String>,
    #[arg(long, global = true)]
    production: Option<String>,
    #[arg(long, global = true)]
    scores: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    fdp_max: Option<String>,
    #[arg(long, global = true)]
    alpha_source: Option<String>,
    #[arg(long, global = true)]
    alpha_prod: Option<String>,
    #[arg(long, global = true)]
    alpha_split: Option<String>,
    #[arg(long, global = true)]
    eps_tol: Option<String>,
    #[arg(long, global = true)]
    delta_corr: Option<String>,
    #[arg(long, global = true)]
    schedule: Option<String>,
    #[arg(long, global = true)]
    onset: Option<String>,
    #[arg(long, global = true)]
    horizon: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    repetitions: Option<String>,
    #[arg(long, global = true)]
    workers: Option<String>,
    #[arg(long, global = true)]
    feature_kinds: Option<String>,
    #[arg(long, global = true)]
    eps_harm: Option<String>,
    #[arg(long, global = true)]
    eps_harm_grid: Option<String>,
    #[arg(long, global = true)]
    eps_tol_grid: Option<String>,
    #[arg(long, global = true)]
    generator: Option<String>,
    #[arg(long, global = true)]
    generator_n: Option<String>,
    #[arg(long, global = true)]
    trajectories: Option<String>,
    /// Any config key as `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let named = [
            ("source", &self.source),
            ("production", &self.production),
            ("scores", &self.scores),
            ("output_dir", &self.output_dir),
            ("k", &self.k),
            ("fdp_max", &self.fdp_max),
            ("alpha_source", &self.alpha_source),
            ("alpha_prod", &self.alpha_prod),
            ("alpha_split", &self.alpha_split),
            ("eps_tol", &self.eps_tol),
            ("delta_corr", &self.delta_corr),
            ("schedule", &self.schedule),
            ("onset", &self.onset),
            ("horizon", &self.horizon),
            ("seed", &self.seed),
            ("repetitions", &self.repetitions),
            ("workers", &self.workers),
            ("feature_kinds", &self.feature_kinds),
            ("eps_harm", &self.eps_harm),
            ("eps_harm_grid", &self.eps_harm_grid),
            ("eps_tol_grid", &self.eps_tol_grid),
            ("generator", &self.generator),
            ("generator_n", &self.generator_n),
            ("trajectories", &self.trajectories),
        ];
        let mut out: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{pair}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = match cli.flags.overrides() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cfg = match parse_config(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            if matches!(e, ConfigError::UnknownKey { .. }) {
                eprintln!("known keys: {}", KEYS.join(", "));
            }
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Calibrate => commands::calibrate(&cfg),
        Command::Monitor => commands::monitor(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
