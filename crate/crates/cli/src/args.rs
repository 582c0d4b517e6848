//! Command-line surface. Any `--key value` or `--key=value` that is not one
//! of the fixed flags becomes a scalar parameter override.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{self, CommandName, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "noncanon", version, about = "Batch experiments on the non-canonical photon model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Exact coincidence-class probabilities of oscillator tuples.
    Combinatorics(RunArgs),
    /// Excitation-number distributions of the N-oscillator coherent state.
    Excitations(RunArgs),
    /// Canonical survival amplitude, resolvent and Volterra.
    Amplitude(RunArgs),
    /// Non-canonical amplitude at finite N against the canonical one.
    ThermoLimit(RunArgs),
    /// Smeared commutator function and light-cone diagnostics.
    Propagator(RunArgs),
    /// Radiated photon number against the infrared cutoff.
    Radiation(RunArgs),
    /// Drift of the amplitude under window doublings at fixed C·Z.
    RenormSweep(RunArgs),
    /// Check a configuration and report derived sizes without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script for the CSVs.
    #[arg(long)]
    pub plot: bool,
    /// Parameter override `key=value`; `--key value` is shorthand.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// JSON run configuration; must name its command.
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

const FIXED_WITH_VALUE: [&str; 4] = ["--config", "--seed", "--out", "--set"];
const FIXED_SWITCHES: [&str; 4] = ["--plot", "--help", "--version", "--"];

/// Rewrites free-form parameter flags into `--set key=value`.
pub fn normalize(argv: &[String]) -> Vec<String> {
    let mut out: Vec<String> = argv.iter().take(2).cloned().collect();
    let mut i = 2;
    while i < argv.len() {
        let arg = &argv[i];
        let name = arg.split('=').next().unwrap_or(arg);
        if !arg.starts_with("--") || FIXED_SWITCHES.contains(&arg.as_str()) || FIXED_WITH_VALUE.contains(&name) {
            out.push(arg.clone());
            if FIXED_WITH_VALUE.contains(&arg.as_str()) && i + 1 < argv.len() {
                out.push(argv[i + 1].clone());
                i += 1;
            }
        } else if let Some((key, value)) = arg[2..].split_once('=') {
            out.extend(["--set".to_string(), format!("{key}={value}")]);
        } else {
            let key = &arg[2..];
            match argv.get(i + 1) {
                Some(next) if !next.starts_with("--") => {
                    out.extend(["--set".to_string(), format!("{key}={next}")]);
                    i += 1;
                }
                _ => out.extend(["--set".to_string(), format!("{key}=true")]),
            }
        }
        i += 1;
    }
    out
}

fn split_sets(set: &[String]) -> Result<Vec<(String, String)>, CliError> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CliError::config(s.clone(), "override must look like key=value"))
        })
        .collect()
}

fn command_of(sub: &Sub) -> Option<CommandName> {
    Some(match sub {
        Sub::Combinatorics(_) => CommandName::Combinatorics,
        Sub::Excitations(_) => CommandName::Excitations,
        Sub::Amplitude(_) => CommandName::Amplitude,
        Sub::ThermoLimit(_) => CommandName::ThermoLimit,
        Sub::Propagator(_) => CommandName::Propagator,
        Sub::Radiation(_) => CommandName::Radiation,
        Sub::RenormSweep(_) => CommandName::RenormSweep,
        Sub::Validate(_) => return None,
    })
}

/// Parses `argv`, runs, prints a short report and returns the exit code.
pub fn main_with(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(normalize(argv)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let command = command_of(&cli.command);
    match cli.command {
        Sub::Validate(a) => {
            let overrides = Overrides { command: None, seed: a.seed, output_dir: a.out, params: split_sets(&a.set)? };
            let cfg = config::load(Some(&a.config), &overrides)?;
            print!("{}", crate::validate(&cfg)?);
            Ok(0)
        }
        Sub::Combinatorics(a)
        | Sub::Excitations(a)
        | Sub::Amplitude(a)
        | Sub::ThermoLimit(a)
        | Sub::Propagator(a)
        | Sub::Radiation(a)
        | Sub::RenormSweep(a) => {
            let overrides = Overrides { command, seed: a.seed, output_dir: a.out, params: split_sets(&a.set)? };
            let cfg = config::load(a.config.as_deref(), &overrides)?;
            let report = crate::run(&cfg, a.plot)?;
            println!(
                "{}: wrote {} files to {} in {:.2} s",
                cfg.command.as_str(),
                report.manifest.outputs.len() + 1,
                cfg.output_dir.display(),
                report.manifest.wall_time_seconds
            );
            match report.failure {
                Some(f) => {
                    eprintln!("error: numerical failure: {f}");
                    Ok(1)
                }
                None => Ok(0),
            }
        }
    }
}
