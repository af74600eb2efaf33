//! Command-line experiment runner. Reads a JSON experiment config, runs the
//! requested study with deterministic parallel replications, and writes a
//! plot-ready CSV.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use ergodic_mi::harness::{run_experiment, write_csv, write_csv_file, ExperimentKind, Units};
use ergodic_mi::ExperimentConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Sweep,
    Convergence,
    HighSnr,
    RmtCompare,
    DosHistogram,
}

impl From<ExperimentArg> for ExperimentKind {
    fn from(value: ExperimentArg) -> Self {
        match value {
            ExperimentArg::Sweep => ExperimentKind::Sweep,
            ExperimentArg::Convergence => ExperimentKind::Convergence,
            ExperimentArg::HighSnr => ExperimentKind::HighSnr,
            ExperimentArg::RmtCompare => ExperimentKind::RmtCompare,
            ExperimentArg::DosHistogram => ExperimentKind::DosHistogram,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitsArg {
    Nats,
    Bits,
}

impl From<UnitsArg> for Units {
    fn from(value: UnitsArg) -> Self {
        match value {
            UnitsArg::Nats => Units::Nats,
            UnitsArg::Bits => Units::Bits,
        }
    }
}

/// Mutual-information experiments for ergodic block channels.
#[derive(Debug, Parser)]
#[command(name = "ergodic-mi", version, about)]
struct Cli {
    /// Experiment to run (overrides the `experiment` field of the config).
    experiment: ExperimentArg,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (the ERGODIC_MI_THREADS env var takes precedence).
    #[arg(long)]
    threads: Option<usize>,
    /// Output units (overrides the config).
    #[arg(long, value_enum)]
    units: Option<UnitsArg>,
}

fn thread_count(cli: &Cli) -> Result<Option<usize>> {
    if let Ok(raw) = std::env::var("ERGODIC_MI_THREADS") {
        let n: usize = raw
            .parse()
            .with_context(|| format!("ERGODIC_MI_THREADS must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            bail!("ERGODIC_MI_THREADS must be >= 1");
        }
        return Ok(Some(n));
    }
    Ok(cli.threads)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading config {}", cli.config.display()))?;
    let mut config = ExperimentConfig::from_json(&text)
        .with_context(|| format!("parsing config {}", cli.config.display()))?;
    config.experiment = cli.experiment.into();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(units) = cli.units {
        config.units = units.into();
    }
    if let Some(threads) = thread_count(&cli)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }

    let rows = run_experiment(&config)?;

    let out_path = cli
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from));
    match out_path {
        Some(path) => {
            write_csv_file(&rows, config.units, &path)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&rows, config.units, &mut lock)?;
        }
    }
    Ok(())
}
