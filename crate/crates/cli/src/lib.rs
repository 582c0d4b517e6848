//! Batch front-end: parses a run configuration, pre-flights it against the
//! resource caps, runs one experiment through the core library and writes
//! CSV/JSON artifacts plus a manifest.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod preflight;

use std::path::Path;
use std::time::Instant;

pub use config::{load, load_str, CommandName, Overrides, Params, RunConfig};
pub use error::CliError;

use commands::{execute, plot_script, Artifact};
use manifest::{OutputRecord, RunManifest, MANIFEST_FILE};

pub const THREADS_ENV: &str = "NONCANON_THREADS";

/// What a finished run left behind.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: RunManifest,
    /// Set when the experiment ran but violated a numerical contract.
    pub failure: Option<String>,
}

/// Sizes the global rayon pool from `NONCANON_THREADS`. Returns the worker
/// count in effect.
pub fn configure_threads() -> Result<usize, CliError> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::config(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(THREADS_ENV, e))?;
    }
    Ok(rayon::current_num_threads())
}

fn write_file(dir: &Path, artifact: &Artifact) -> Result<(), CliError> {
    let path = dir.join(&artifact.name);
    std::fs::write(&path, &artifact.bytes).map_err(|source| CliError::Io { path, source })
}

/// Runs the experiment and writes its artifacts and manifest into the
/// configured output directory. Resource-cap breaches found in pre-flight
/// abort before anything is written.
pub fn run(cfg: &RunConfig, plot: bool) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let pf = preflight::preflight(cfg)?;
    if !pf.breaches.is_empty() {
        let text: Vec<String> = pf.breaches.iter().map(|b| format!("{} ({})", b.what, b.suggestion)).collect();
        return Err(CliError::Resource(text.join("; ")));
    }
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;

    let result = execute(cfg);
    let mut artifacts = Vec::new();
    let (status, diagnostics, failure, error) = match result {
        Ok(outcome) => {
            artifacts = outcome.artifacts;
            let mut summary = serde_json::to_vec_pretty(&outcome.summary).expect("summary is valid JSON");
            summary.push(b'\n');
            artifacts.push(Artifact { name: "summary.json".into(), bytes: summary });
            if plot {
                artifacts.push(Artifact { name: "plot.gp".into(), bytes: plot_script(&outcome.figures).into_bytes() });
            }
            match outcome.failure {
                Some(f) => ("failed", vec![f.clone()], Some(f), None),
                None => ("ok", Vec::new(), None, None),
            }
        }
        Err(e) => ("failed", vec![e.to_string()], None, Some(e)),
    };
    for a in &artifacts {
        write_file(dir, a)?;
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.as_str().to_string(),
        config: cfg.echo.clone(),
        resolved: serde_json::to_value(&cfg.params).expect("parameters serialize"),
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        status,
        diagnostics,
        outputs: artifacts.iter().map(OutputRecord::of).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_file(dir, &Artifact { name: MANIFEST_FILE.into(), bytes })?;
    match error {
        Some(e) => Err(e),
        None => Ok(RunReport { manifest, failure }),
    }
}

/// Schema check and pre-flight report, no computation. The report starts
/// with `OK`.
pub fn validate(cfg: &RunConfig) -> Result<String, CliError> {
    let pf = preflight::preflight(cfg)?;
    Ok(format!("OK\n{}", pf.render()))
}
