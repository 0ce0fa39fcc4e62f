//! Command-line front end: argument parsing, dispatch and report emission.

mod commands;
mod points;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::flag::DEFAULT_MAX_DEPTH;
use crate::spec::{DistributionSpec, SCHEMA_VERSION};
use crate::spectral::DEFAULT_TOLERANCE;

pub use points::{parse_points, read_points};
pub use report::{
    RunReport, Warning, FLAG_NOT_STABILIZED, NO_TANGENT_GENERATOR, PARTIAL_CONVERGENCE, PERIODIC_SURROGATE,
};

#[derive(Debug, Parser)]
#[command(name = "horlap", version, about = "Horizontal Laplacians of polynomial distributions")]
pub struct Cli {
    /// Distribution spec (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Evaluation and module fiber dimensions at rational points.
    Analyze {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        degree_bound: Option<u32>,
    },
    /// Bracket flag, growth vectors and regularity at probe points.
    Flag {
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        #[arg(long)]
        probes: PathBuf,
    },
    /// Lowest eigenpairs of the discrete sum-of-squares operator.
    Spectrum {
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 6)]
        num_eigs: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Global spectrum against the union of leaf spectra.
    Leafwise {
        #[arg(long, value_delimiter = ',', required = true)]
        leaf_axes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 6)]
        num_eigs: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        /// Assemble the leaves from this spec's generators instead.
        #[arg(long)]
        leaf_spec: Option<PathBuf>,
    },
    /// Sobolev gain ratio across grid refinements.
    Subelliptic {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        trials: usize,
    },
    /// Convolution algebra identities on a trivial groupoid chart.
    GroupoidCheck {
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        leaf_axes: Vec<usize>,
        /// Log of the leafwise density α.
        #[arg(long, default_value = "0")]
        alpha: String,
        /// Replace α and μ by seeded random quadratic log-densities.
        #[arg(long)]
        random_densities: bool,
        /// Leaf resolutions used for the multiplier check (each doubles the last).
        #[arg(long, default_value_t = 3)]
        refinements: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Flag { .. } => "flag",
            Command::Spectrum { .. } => "spectrum",
            Command::Leafwise { .. } => "leafwise",
            Command::Subelliptic { .. } => "subelliptic",
            Command::GroupoidCheck { .. } => "groupoid-check",
        }
    }
}

pub fn load_spec(path: impl AsRef<std::path::Path>) -> Result<DistributionSpec> {
    DistributionSpec::load(path)
}

/// Runs one command. Solver non-convergence yields a partial report rather than an error.
pub fn run_command(spec: &DistributionSpec, command: &Command) -> Result<RunReport> {
    let start = Instant::now();
    let out = commands::dispatch(spec, command)?;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION.into(),
        command: command.name().into(),
        spec_digest: spec.digest(),
        parameters: out.parameters,
        results: out.results,
        warnings: out.warnings,
        timings: [("total_seconds".to_string(), start.elapsed().as_secs_f64())].into(),
    })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 1,
        e if e.is_validation() => 2,
        _ => 3,
    }
}

/// Full CLI entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Some(path) = cli.spec.as_ref() else {
        eprintln!("error: --spec is required");
        return 2;
    };
    let result = load_spec(path).and_then(|spec| run_command(&spec, &cli.command));
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let written = match &cli.out {
        Some(p) => report.write(p),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&report.to_json()).map_err(Error::from)
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 1;
    }
    for w in &report.warnings {
        eprintln!("warning[{}]: {}", w.code, w.message);
    }
    report.exit_code()
}
