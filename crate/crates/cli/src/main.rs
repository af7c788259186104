//! `sparselab <config.json> [--out DIR] [--seed N] [--threads N] [--check-only]`
//!
//! Runs one named experiment and writes `<prefix>.csv`, `<prefix>.summary.json`
//! and any extra artifacts into the output directory.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or the run
//! itself errors, 2 for an invalid config. Nothing is written on exit 2.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use sparselab::experiments::{self, Outcome, EXPERIMENTS};
use sparselab::{exec, Error};

#[derive(Parser, Debug)]
#[command(name = "sparselab", version, about = "Run a sparselab experiment from a JSON config")]
struct Args {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel core.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the config and exit without running.
    #[arg(long)]
    check_only: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSpec {
    #[serde(default)]
    dir: Option<PathBuf>,
    #[serde(default)]
    prefix: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    experiment: String,
    #[serde(default)]
    params: Json,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: OutputSpec,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load(args: &Args) -> Result<Config, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg: Config = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
        return Err(Failure::Config(format!(
            "unknown experiment {:?}; expected one of {}",
            cfg.experiment,
            EXPERIMENTS.join(", ")
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.out {
        cfg.output.dir = Some(d.clone());
    }
    if let Some(p) = &cfg.output.prefix {
        if p.is_empty() || p.contains(['/', '\\']) {
            return Err(Failure::Config(format!("bad output prefix {p:?}")));
        }
    }
    if args.threads == Some(0) {
        return Err(Failure::Config("--threads must be positive".into()));
    }
    experiments::validate(&cfg.experiment, &cfg.params)?;
    Ok(cfg)
}

/// SHA-256 of the resolved config. serde_json maps are ordered, so the
/// serialization is canonical.
fn config_hash(cfg: &Config) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

fn write_outputs(cfg: &Config, out: &Outcome, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let prefix = cfg.output.prefix.clone().unwrap_or_else(|| cfg.experiment.clone());
    let mut written = Vec::new();

    let csv_path = dir.join(format!("{prefix}.csv"));
    let mut buf = Vec::new();
    out.table.write_csv(&mut buf).map_err(std::io::Error::other)?;
    fs::write(&csv_path, buf)?;
    written.push(csv_path.clone());

    let mut artifacts = Vec::new();
    for (suffix, body) in &out.artifacts {
        let p = dir.join(format!("{prefix}.{suffix}"));
        fs::write(&p, body)?;
        artifacts.push(p.file_name().unwrap().to_string_lossy().into_owned());
        written.push(p);
    }

    let summary = json!({
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_sha256": config_hash(cfg),
        "versions": {
            "sparselab": sparselab::VERSION,
            "sparselab-cli": env!("CARGO_PKG_VERSION"),
        },
        "config": cfg,
        "passed": out.passed(),
        "checks": out.checks,
        "results": out.summary,
        "csv": csv_path.file_name().unwrap().to_string_lossy(),
        "rows": out.table.rows.len(),
        "artifacts": artifacts,
    });
    let p = dir.join(format!("{prefix}.summary.json"));
    fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")?;
    written.push(p);
    Ok(written)
}

fn execute(args: &Args) -> Result<bool, Failure> {
    let cfg = load(args)?;
    if args.check_only {
        println!("config ok: {} (sha256 {})", cfg.experiment, config_hash(&cfg));
        return Ok(true);
    }
    let run = || experiments::run(&cfg.experiment, &cfg.params, cfg.seed);
    let out = match args.threads {
        Some(n) => exec::with_threads(n, run)??,
        None => run()?,
    };

    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let written = write_outputs(&cfg, &out, &dir).map_err(|e| Failure::Run(format!("writing outputs: {e}")))?;
    for c in &out.checks {
        println!("{} {} | {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(out.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("invalid config: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
