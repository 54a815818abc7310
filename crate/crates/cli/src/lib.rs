//! Command-line front end: scenario loading, task dispatch and report output.

pub mod error;
pub mod output;
pub mod scenario;
pub mod tasks;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::error::{CliError, CliResult};
use crate::tasks::Limits;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "qreal", version, about = "Quasiprobabilities of observation sequences, noise convolution and positivity checks")]
pub struct Args {
    /// Scenario JSON file; optional for noise-floor and table1-demo.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// One of: quasi, convolve-eval, positivity, long-sequence, moments,
    /// calibrate, cs-check, weak-limit, noise-floor, table1-demo.
    #[arg(long)]
    pub task: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for data-parallel sections.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Work bounds, e.g. `atoms=1000000,grid=10000000,scan=100000`.
    #[arg(long)]
    pub limits: Option<String>,
}

/// Produce the rendered report for `args`.
pub fn render(args: &Args) -> CliResult<String> {
    let limits = match &args.limits {
        Some(spec) => Limits::parse(spec)?,
        None => Limits::default(),
    };
    let loaded = match &args.scenario {
        Some(path) => Some(scenario::load(path)?),
        None => None,
    };
    let report = tasks::run_task(&args.task, loaded.as_ref(), limits)?;
    match args.format {
        Format::Json => Ok(output::render_json(&report.json)),
        Format::Csv => output::render_csv(&report.csv),
    }
}

/// Run one invocation; the caller maps the error to an exit status.
pub fn run(args: &Args) -> CliResult<()> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::io(format!("thread pool: {e}")))?;
    }
    let text = render(args)?;
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(format!("stdout: {e}")))
        }
    }
}
