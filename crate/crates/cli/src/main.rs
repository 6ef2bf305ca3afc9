//! `projq`: scenario-driven runs of the constrained-quantization laboratory.

mod commands;
mod output;
mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::commands::Ctx;
use crate::output::{Artifacts, RunRecord};
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(name = "projq", version, about = "Projection-operator quantization of constrained systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "projq-out")]
    out: PathBuf,
    /// Overrides the classical sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for internal parallelism.
    #[arg(long, env = "PROJQ_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check the scenario enables.
    Verify(RunArgs),
    /// Build the physical projector, γ ladder, germ limit or metric grid.
    Project(RunArgs),
    /// Chernoff convergence towards the reduced evolution.
    Evolve(RunArgs),
    /// Coherent-state lattice path integral.
    Pathint(RunArgs),
    /// Classify the classical twin of the constraints.
    Classify(RunArgs),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: invalid scenario: {msg}")]
    Validation { path: String, msg: String },
    #[error("{path}: {source}")]
    Module {
        path: String,
        #[source]
        source: projq_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Module { source, .. } => match source {
                projq_core::Error::QuadratureNonConvergence(_) => 1,
                _ => 2,
            },
            CliError::Io { .. } => 1,
        }
    }
}

type Pipeline = fn(&Ctx, &mut Artifacts) -> projq_core::Result<()>;

fn run(name: &str, pipeline: Pipeline, args: &RunArgs) -> Result<bool, CliError> {
    let path = args.scenario.display().to_string();
    if let Some(n) = args.threads {
        // a second initialization only happens in tests; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let bytes = fs::read(&args.scenario).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Validation {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    let scenario = Scenario::parse(&text).map_err(|msg| CliError::Validation {
        path: path.clone(),
        msg,
    })?;
    let ctx = Ctx {
        scenario: &scenario,
        seed: args.seed,
    };
    let mut art = Artifacts::default();
    art.timed(name, |art| pipeline(&ctx, art))
        .map_err(|source| CliError::Module {
            path: path.clone(),
            source,
        })?;
    let passed = art.passed();
    let record = RunRecord {
        artifact_version: env!("CARGO_PKG_VERSION"),
        schema_version: scenario::SCHEMA_VERSION,
        command: name.to_string(),
        scenario_name: scenario.name.clone(),
        scenario_hash: hex(&Sha256::digest(&bytes)),
        seed: scenario.classical.as_ref().map(|c| args.seed.unwrap_or(c.seed)),
        outputs: std::mem::take(&mut art.outputs),
        checks: art.checks.clone(),
        passed,
    };
    report(&record);
    art.finish(&record, &args.out).map_err(|source| CliError::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    Ok(passed)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn report(record: &RunRecord) {
    for c in &record.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        match c.value {
            Some(v) => println!("{status}  {}: {v:.3e} ({})", c.name, c.detail),
            None => println!("{status}  {}: {}", c.name, c.detail),
        }
    }
    if let Some(serde_json::Value::String(line)) = record.outputs.get("identity") {
        println!("{line}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, pipeline, args): (&str, Pipeline, &RunArgs) = match &cli.command {
        Command::Verify(a) => ("verify", commands::verify, a),
        Command::Project(a) => ("project", commands::project, a),
        Command::Evolve(a) => ("evolve", commands::evolve, a),
        Command::Pathint(a) => ("pathint", commands::pathint, a),
        Command::Classify(a) => ("classify", commands::classify, a),
    };
    match run(name, pipeline, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: one or more checks failed", args.scenario.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
