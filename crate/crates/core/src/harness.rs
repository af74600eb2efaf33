//! Declarative experiment runner: SNR sweeps, convergence studies,
//! high-SNR offset extraction, large-dimension comparisons, and
//! density-of-states histograms, all emitted as plot-ready CSV.
//!
//! Replications run in a work pool with pre-assigned RNG substreams and are
//! merged in (grid index, replication) order, so results do not depend on
//! the thread count.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_models::{ChannelGenerator, ModelConfig, ModelError, ModelVariant};
use crate::estimators::{
    hh_star_eigenvalues, kappa_estimate, naive_mi, recursive_mi, EstimatorError, MiEstimate,
};
use crate::rmt::{mp_closed_form, mp_density, ring_mi, RmtError};
use crate::HpdMatrix;

/// Config schema version accepted by this build.
pub const SPEC_VERSION: u32 = 1;

/// Exact column set of every emitted CSV.
pub const CSV_HEADER: &str =
    "experiment,snr_db,estimator,value,std_error,n_steps,replication,wall_time_ms";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sweep,
    Convergence,
    HighSnr,
    RmtCompare,
    DosHistogram,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::HighSnr => "high-snr",
            ExperimentKind::RmtCompare => "rmt-compare",
            ExperimentKind::DosHistogram => "dos-histogram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

fn default_replications() -> usize {
    1
}

fn default_naive_block_length() -> usize {
    400
}

fn default_spec_version() -> u32 {
    SPEC_VERSION
}

/// Declarative experiment description; JSON with unknown fields rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_spec_version")]
    pub spec_version: u32,
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub snr_grid_db: Vec<f64>,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_naive_block_length")]
    pub naive_block_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub units: Units,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.spec_version != SPEC_VERSION {
            return Err(HarnessError::Config(format!(
                "spec_version {} unsupported (this build speaks {SPEC_VERSION})",
                self.spec_version
            )));
        }
        if self.snr_grid_db.is_empty() {
            return Err(HarnessError::Config("snr_grid_db must be nonempty".into()));
        }
        if self.n_steps <= self.burn_in {
            return Err(HarnessError::Config(format!(
                "n_steps ({}) must exceed burn_in ({})",
                self.n_steps, self.burn_in
            )));
        }
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be >= 1".into()));
        }
        if self.naive_block_length == 0 {
            return Err(HarnessError::Config(
                "naive_block_length must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The model with the experiment-level seed applied.
    fn seeded_model(&self) -> ModelConfig {
        let mut model = self.model.clone();
        model.seed = self.seed;
        model
    }
}

/// Linear SNR from a decibel value: `rho = 10^{dB/10}`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One output record. Values are carried in nats; unit conversion happens
/// only at serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub snr_db: f64,
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub n_steps: usize,
    pub replication: usize,
    pub wall_time_ms: u64,
}

fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

impl ResultRow {
    pub fn to_csv_line(&self, units: Units) -> String {
        let scale = match units {
            Units::Nats => 1.0,
            Units::Bits => std::f64::consts::LN_2,
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.experiment,
            fmt_sig12(self.snr_db),
            self.estimator,
            fmt_sig12(self.value / scale),
            fmt_sig12(self.std_error / scale),
            self.n_steps,
            self.replication,
            self.wall_time_ms
        )
    }

    /// Parses a line written by [`to_csv_line`] back into the schema (values
    /// interpreted in the units the file was written with).
    pub fn from_csv_line(line: &str, units: Units) -> Result<Self, HarnessError> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(HarnessError::Parse(format!(
                "expected 8 fields, got {} in {line:?}",
                parts.len()
            )));
        }
        let scale = match units {
            Units::Nats => 1.0,
            Units::Bits => std::f64::consts::LN_2,
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| HarnessError::Parse(format!("bad float {s:?}: {e}")))
        };
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| HarnessError::Parse(format!("bad integer {s:?}: {e}")))
        };
        Ok(Self {
            experiment: parts[0].to_string(),
            snr_db: num(parts[1])?,
            estimator: parts[2].to_string(),
            value: num(parts[3])? * scale,
            std_error: num(parts[4])? * scale,
            n_steps: int(parts[5])? as usize,
            replication: int(parts[6])? as usize,
            wall_time_ms: int(parts[7])?,
        })
    }
}

/// Serializes rows as CSV (UTF-8, LF endings, 12 significant digits).
pub fn write_csv(rows: &[ResultRow], units: Units, out: &mut impl Write) -> Result<(), HarnessError> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        out.write_all(row.to_csv_line(units).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], units: Units, path: &Path) -> Result<(), HarnessError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(rows, units, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Reads a CSV produced by [`write_csv`] back into rows.
pub fn read_csv(text: &str, units: Units) -> Result<Vec<ResultRow>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Parse(format!("bad header: {other:?}")));
        }
    }
    lines.map(|l| ResultRow::from_csv_line(l, units)).collect()
}

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

/// Independent RNG lanes per (grid point, replication) task.
const LANES: u64 = 4;
const LANE_RECURSIVE: u64 = 0;
const LANE_NAIVE: u64 = 1;
const LANE_KAPPA: u64 = 2;
const LANE_AUX: u64 = 3;

fn substream(config: &ExperimentConfig, grid_idx: usize, rep: usize, lane: u64) -> u64 {
    ((grid_idx * config.replications + rep) as u64) * LANES + lane
}

fn generator(
    model: &ModelConfig,
    sub: u64,
) -> Result<ChannelGenerator<f64>, HarnessError> {
    Ok(ChannelGenerator::from_config(model, sub)?)
}

fn timed<R>(f: impl FnOnce() -> Result<R, HarnessError>) -> Result<(R, u64), HarnessError> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_millis() as u64))
}

fn estimate_row(
    experiment: &str,
    snr_db: f64,
    estimator: String,
    est: &MiEstimate<f64>,
    replication: usize,
    wall_time_ms: u64,
) -> ResultRow {
    ResultRow {
        experiment: experiment.to_string(),
        snr_db,
        estimator,
        value: est.value,
        std_error: est.std_error,
        n_steps: est.n_steps,
        replication,
        wall_time_ms,
    }
}

type TaskVec<T> = Vec<Box<dyn FnOnce() -> Result<Vec<T>, HarnessError> + Send>>;

/// Runs tasks in the current rayon pool and flattens the results in task
/// order, independent of scheduling.
fn run_pool<T: Send>(tasks: TaskVec<T>) -> Result<Vec<T>, HarnessError> {
    let results: Vec<Result<Vec<T>, HarnessError>> =
        tasks.into_par_iter().map(|task| task()).collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Recursive estimates over an SNR grid, with a naive log-det cross-check
/// per replication.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let model = config.seeded_model();
    let mut tasks: TaskVec<ResultRow> = Vec::new();
    for (gi, &snr_db) in config.snr_grid_db.iter().enumerate() {
        for rep in 0..config.replications {
            let model = model.clone();
            let cfg = config.clone();
            tasks.push(Box::new(move || {
                let rho = db_to_linear(snr_db);
                let mut rows = Vec::new();
                let gen = generator(&model, substream(&cfg, gi, rep, LANE_RECURSIVE))?;
                let k_dim = gen.dims().1;
                let (est, ms) = timed(|| {
                    Ok(recursive_mi(
                        gen,
                        rho,
                        &HpdMatrix::identity(k_dim),
                        cfg.n_steps,
                        cfg.burn_in,
                        false,
                    )?)
                })?;
                rows.push(estimate_row("sweep", snr_db, "recursive".into(), &est, rep, ms));
                let mut gen = generator(&model, substream(&cfg, gi, rep, LANE_NAIVE))?;
                let (est, ms) = timed(|| {
                    let pairs: Vec<_> = gen
                        .by_ref()
                        .take(cfg.naive_block_length)
                        .collect();
                    Ok(naive_mi(&pairs, rho)?)
                })?;
                rows.push(estimate_row("sweep", snr_db, "naive".into(), &est, rep, ms));
                Ok(rows)
            }));
        }
    }
    run_pool(tasks)
}

/// Naive estimates at increasing block lengths, next to a long-run
/// recursive reference value, to expose the finite-window dispersion.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let model = config.seeded_model();
    // six doubling window lengths ending at naive_block_length
    let lengths: Vec<usize> = (0..6u32)
        .rev()
        .map(|k| (config.naive_block_length >> k).max(1))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tasks: TaskVec<ResultRow> = Vec::new();
    for (gi, &snr_db) in config.snr_grid_db.iter().enumerate() {
        for rep in 0..config.replications {
            let model = model.clone();
            let cfg = config.clone();
            let lengths = lengths.clone();
            tasks.push(Box::new(move || {
                let rho = db_to_linear(snr_db);
                let mut rows = Vec::new();
                for (li, &len) in lengths.iter().enumerate() {
                    let mut gen = generator(
                        &model,
                        substream(&cfg, gi, rep, LANE_NAIVE) + (li as u64) * 1_000_003,
                    )?;
                    let (est, ms) = timed(|| {
                        let pairs: Vec<_> = gen.by_ref().take(len).collect();
                        Ok(naive_mi(&pairs, rho)?)
                    })?;
                    rows.push(estimate_row(
                        "convergence",
                        snr_db,
                        format!("naive[n={len}]"),
                        &est,
                        rep,
                        ms,
                    ));
                }
                Ok(rows)
            }));
        }
        // one reference line per grid point, emitted as replication index
        // `replications` so it sorts after the per-replication rows
        let model = model.clone();
        let cfg = config.clone();
        tasks.push(Box::new(move || {
            let rho = db_to_linear(snr_db);
            let gen = generator(&model, substream(&cfg, gi, cfg.replications, LANE_RECURSIVE))?;
            let k_dim = gen.dims().1;
            let (est, ms) = timed(|| {
                Ok(recursive_mi(
                    gen,
                    rho,
                    &HpdMatrix::identity(k_dim),
                    cfg.n_steps,
                    cfg.burn_in,
                    false,
                )?)
            })?;
            Ok(vec![estimate_row(
                "convergence",
                snr_db,
                "recursive-reference".into(),
                &est,
                cfg.replications,
                ms,
            )])
        }));
    }
    run_pool(tasks)
}

/// High-SNR decomposition: `I_rho`, the offset `kappa` from the
/// Z-recursion, and the asymptote `(K/N) log rho + kappa`.
pub fn run_high_snr(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let model = config.seeded_model();
    let (n_dim, k_dim) = model.block_dims()?;
    if n_dim <= k_dim {
        return Err(HarnessError::Config(format!(
            "high-snr needs N > K, got N = {n_dim}, K = {k_dim}"
        )));
    }
    // sensitivity metadata goes into the estimator label since the CSV
    // schema is fixed
    let meta = format!(
        "[f_d={},k_r={}]",
        model
            .f_d
            .map(|x| x.to_string())
            .unwrap_or_else(|| "na".into()),
        model.rice_factor
    );
    let mut tasks: TaskVec<ResultRow> = Vec::new();
    for (gi, &snr_db) in config.snr_grid_db.iter().enumerate() {
        for rep in 0..config.replications {
            let model = model.clone();
            let cfg = config.clone();
            let meta = meta.clone();
            tasks.push(Box::new(move || {
                let rho = db_to_linear(snr_db);
                let mut rows = Vec::new();
                let gen = generator(&model, substream(&cfg, gi, rep, LANE_RECURSIVE))?;
                let (mi, ms) = timed(|| {
                    Ok(recursive_mi(
                        gen,
                        rho,
                        &HpdMatrix::identity(k_dim),
                        cfg.n_steps,
                        cfg.burn_in,
                        false,
                    )?)
                })?;
                rows.push(estimate_row(
                    "high-snr",
                    snr_db,
                    format!("recursive{meta}"),
                    &mi,
                    rep,
                    ms,
                ));
                let gen = generator(&model, substream(&cfg, gi, rep, LANE_KAPPA))?;
                let (kappa, ms) = timed(|| {
                    Ok(kappa_estimate(
                        gen,
                        &HpdMatrix::identity(k_dim),
                        cfg.n_steps,
                        cfg.burn_in,
                        false,
                    )?)
                })?;
                rows.push(estimate_row(
                    "high-snr",
                    snr_db,
                    format!("kappa{meta}"),
                    &kappa,
                    rep,
                    ms,
                ));
                let asymptote = MiEstimate {
                    value: (k_dim as f64 / n_dim as f64) * rho.ln() + kappa.value,
                    std_error: kappa.std_error,
                    n_steps: kappa.n_steps,
                    increments: None,
                };
                rows.push(estimate_row(
                    "high-snr",
                    snr_db,
                    format!("asymptote{meta}"),
                    &asymptote,
                    rep,
                    0,
                ));
                Ok(rows)
            }));
        }
    }
    run_pool(tasks)
}

/// Degree sweep toward the Marchenko-Pastur limit: recursive estimate,
/// ring-matrix proxy at matching horizon, and the closed-form asymptote.
pub fn run_rmt_compare(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    if config.model.variant == ModelVariant::IidGaussian {
        return Err(HarnessError::Config(
            "rmt-compare sweeps the multipath degree; pick a multipath model".into(),
        ));
    }
    let model = config.seeded_model();
    // degree grid 1, 3, 7, ..., up to the configured L
    let mut degrees: Vec<usize> = Vec::new();
    let mut l = 1usize;
    while l < model.l {
        degrees.push(l);
        l = 2 * l + 1;
    }
    degrees.push(model.l.max(1));
    let mut tasks: TaskVec<ResultRow> = Vec::new();
    for (gi, &snr_db) in config.snr_grid_db.iter().enumerate() {
        for (di, &degree) in degrees.iter().enumerate() {
            for rep in 0..config.replications {
                let mut model = model.clone();
                model.l = degree;
                let cfg = config.clone();
                let task_idx = gi * degrees.len() + di;
                tasks.push(Box::new(move || {
                    let rho = db_to_linear(snr_db);
                    let mut rows = Vec::new();
                    let profile = model.amplitude_profile::<f64>()?;
                    let norm: f64 = profile.iter().map(|a| a * a).sum::<f64>().sqrt();
                    let gen = generator(&model, substream(&cfg, task_idx, rep, LANE_RECURSIVE))?;
                    let k_dim = gen.dims().1;
                    let (est, ms) = timed(|| {
                        Ok(recursive_mi(
                            gen,
                            rho,
                            &HpdMatrix::identity(k_dim),
                            cfg.n_steps,
                            cfg.burn_in,
                            false,
                        )?)
                    })?;
                    rows.push(estimate_row(
                        "rmt-compare",
                        snr_db,
                        format!("recursive[L={degree}]"),
                        &est,
                        rep,
                        ms,
                    ));
                    let mut gen = generator(&model, substream(&cfg, task_idx, rep, LANE_AUX))?;
                    let horizon = degree.max(2) + 1;
                    let (ring, ms) = timed(|| {
                        let pairs: Vec<_> = gen.by_ref().take(horizon).collect();
                        Ok(ring_mi(&pairs, rho)?)
                    })?;
                    rows.push(ResultRow {
                        experiment: "rmt-compare".into(),
                        snr_db,
                        estimator: format!("ring[M={}]", horizon - 1),
                        value: ring,
                        std_error: 0.0,
                        n_steps: horizon,
                        replication: rep,
                        wall_time_ms: ms,
                    });
                    rows.push(ResultRow {
                        experiment: "rmt-compare".into(),
                        snr_db,
                        estimator: format!("mp-closed-form[L={degree}]"),
                        value: mp_closed_form(rho)?,
                        std_error: 0.0,
                        n_steps: 0,
                        replication: rep,
                        wall_time_ms: 0,
                    });
                    rows.push(ResultRow {
                        experiment: "rmt-compare".into(),
                        snr_db,
                        estimator: format!("profile-norm[L={degree}]"),
                        value: norm,
                        std_error: 0.0,
                        n_steps: 0,
                        replication: rep,
                        wall_time_ms: 0,
                    });
                    Ok(rows)
                }));
            }
        }
    }
    run_pool(tasks)
}

/// Number of histogram bins emitted by [`run_dos_histogram`].
pub const DOS_BINS: usize = 40;

/// Empirical eigenvalue distribution of `H H*` over a finite window,
/// binned, next to the Marchenko-Pastur density sampled at bin centers.
pub fn run_dos_histogram(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let model = config.seeded_model();
    let mut tasks: TaskVec<ResultRow> = Vec::new();
    for (gi, &snr_db) in config.snr_grid_db.iter().enumerate() {
        for rep in 0..config.replications {
            let model = model.clone();
            let cfg = config.clone();
            tasks.push(Box::new(move || {
                let mut gen = generator(&model, substream(&cfg, gi, rep, LANE_AUX))?;
                let start = Instant::now();
                let pairs: Vec<_> = gen.by_ref().take(cfg.naive_block_length).collect();
                let ev = hh_star_eigenvalues(&pairs)?;
                let ms = start.elapsed().as_millis() as u64;
                let max_ev = ev.last().copied().unwrap_or(0.0);
                // cover at least the MP support [0, 4]
                let hi = max_ev.max(4.0) * (1.0 + 1e-12);
                let width = hi / DOS_BINS as f64;
                let mut mass = vec![0usize; DOS_BINS];
                for lambda in &ev {
                    let bin = ((lambda / width) as usize).min(DOS_BINS - 1);
                    mass[bin] += 1;
                }
                let mut rows = Vec::new();
                for (b, count) in mass.iter().enumerate() {
                    let center = (b as f64 + 0.5) * width;
                    rows.push(ResultRow {
                        experiment: "dos-histogram".into(),
                        snr_db,
                        estimator: format!("dos[bin={}]", fmt_sig12(center)),
                        value: *count as f64 / ev.len() as f64,
                        std_error: 0.0,
                        n_steps: ev.len(),
                        replication: rep,
                        wall_time_ms: ms,
                    });
                    rows.push(ResultRow {
                        experiment: "dos-histogram".into(),
                        snr_db,
                        estimator: format!("mp-density[bin={}]", fmt_sig12(center)),
                        value: mp_density(center),
                        std_error: 0.0,
                        n_steps: ev.len(),
                        replication: rep,
                        wall_time_ms: 0,
                    });
                }
                Ok(rows)
            }));
        }
    }
    run_pool(tasks)
}

/// Dispatches on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    match config.experiment {
        ExperimentKind::Sweep => run_sweep(config),
        ExperimentKind::Convergence => run_convergence(config),
        ExperimentKind::HighSnr => run_high_snr(config),
        ExperimentKind::RmtCompare => run_rmt_compare(config),
        ExperimentKind::DosHistogram => run_dos_histogram(config),
    }
}

// ---------------------------------------------------------------------------
