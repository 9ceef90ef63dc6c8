//! Experiment orchestration: configuration, seeded parallel execution,
//! manifests and result files, and comparison of finished runs.
//!
//! A run directory holds `manifest.json`, one CSV per result table,
//! `plot_*.csv` files, `stats.csv` and `fits.json`. The manifest is written
//! before any result and rewritten when the run ends. Tables depend only on
//! the configuration and seed, never on the number of worker threads.

pub mod config;
mod exec;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig, ExperimentKind};
pub use exec::{execute, sample_seeds, Artifacts, Band, BandStatus};
pub use output::{Stat, MANIFEST_NAME, STATS_NAME};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "STOCHHOM_OUT";
pub const DEFAULT_OUT: &str = "stochhom-out";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot compare runs: {0}")]
    Mismatch(String),

    #[error("thread pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub sample: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub experiment: ExperimentKind,
    /// The configuration as parsed, with defaults filled in and any seed
    /// override applied; rerunning it reproduces the run.
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub jobs: usize,
    pub status: RunStatus,
    pub seed_scheme: String,
    pub sample_seeds: Vec<u64>,
    pub wall_time_s: Option<f64>,
    pub failures: Vec<Failure>,
    pub outputs: Vec<String>,
    pub bands: Vec<Band>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Parse(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        write_json(&dir.join(MANIFEST_NAME), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    /// Replaces `n_samples`; used for smoke runs of full-size configs.
    pub samples: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// 0 on success, 2 when a declared band failed, 1 on execution errors.
    pub exit_code: i32,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Output directory: explicit option, then the config, then the
/// environment, then [`DEFAULT_OUT`].
pub fn resolve_out_dir(explicit: Option<&Path>, config: Option<&Path>) -> PathBuf {
    explicit
        .or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn failures_of(e: crate::Error) -> Vec<Failure> {
    match e {
        crate::Error::SampleFailed { index, source } => vec![Failure {
            sample: Some(index),
            error: source.to_string(),
        }],
        e => vec![Failure {
            sample: None,
            error: e.to_string(),
        }],
    }
}

pub fn run(mut config: ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
    if let Some(s) = opts.seed {
        config.set_master_seed(s);
    }
    if let Some(n) = opts.samples {
        config.set_samples(n);
    }
    let common = config.common();
    let dir = resolve_out_dir(opts.out_dir.as_deref(), common.output_dir.as_deref());
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    let jobs = opts
        .jobs
        .or(common.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (seed_scheme, sample_seeds) = sample_seeds(&config);
    let mut manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: common.experiment,
        config: serde_json::to_value(&config).map_err(|e| ExperimentError::Parse(e.to_string()))?,
        master_seed: common.master_seed,
        jobs,
        status: RunStatus::Running,
        seed_scheme,
        sample_seeds,
        wall_time_s: None,
        failures: Vec::new(),
        outputs: Vec::new(),
        bands: Vec::new(),
    };
    manifest.write(&dir)?;

    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let result = pool.install(|| execute(&config));
    let art = match result {
        Ok(a) => a,
        Err(e) => {
            manifest.failures = failures_of(e);
            manifest.status = RunStatus::Failed;
            manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
            manifest.write(&dir)?;
            return Ok(RunOutcome {
                exit_code: 1,
                dir,
                manifest,
            });
        }
    };

    let kind = common.experiment.name();
    let mut outputs = Vec::new();
    for t in art.tables.iter().chain(&art.plots) {
        t.write(&dir, kind)?;
        outputs.push(t.file_name());
    }
    output::stats_table(&art.stats).write(&dir, kind)?;
    outputs.push(STATS_NAME.to_string());
    let fits = serde_json::json!({
        "manifest": MANIFEST_NAME,
        "experiment": kind,
        "results": art.fits,
        "bands": art.bands,
    });
    write_json(&dir.join("fits.json"), &fits)?;
    outputs.push("fits.json".to_string());

    let band_failed = art.bands.iter().any(|b| !b.passed());
    manifest.outputs = outputs;
    manifest.bands = art.bands;
    manifest.status = RunStatus::Completed;
    manifest.wall_time_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    Ok(RunOutcome {
        exit_code: if band_failed && common.check_bands { 2 } else { 0 },
        dir,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatDiff {
    pub key: String,
    pub a: f64,
    pub b: f64,
    /// `|a - b| / max(|a|, |b|)`, zero when equal.
    pub rel_diff: f64,
    /// Whether the two intervals intersect; `None` without intervals.
    pub ci_overlap: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub experiment: ExperimentKind,
    pub entries: Vec<StatDiff>,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
}

impl CompareReport {
    pub fn max_rel_diff(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_diff).fold(0.0, f64::max)
    }

    pub fn all_overlap(&self) -> bool {
        self.entries.iter().all(|e| e.ci_overlap != Some(false))
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn stats_path(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(STATS_NAME)
}

/// Compares the summary statistics of two finished runs of the same kind.
pub fn compare_runs(manifest_a: &Path, manifest_b: &Path) -> Result<CompareReport, ExperimentError> {
    let ma = RunManifest::load(manifest_a)?;
    let mb = RunManifest::load(manifest_b)?;
    if ma.experiment != mb.experiment {
        return Err(ExperimentError::Mismatch(format!(
            "{} vs {}",
            ma.experiment.name(),
            mb.experiment.name()
        )));
    }
    for m in [&ma, &mb] {
        if m.status != RunStatus::Completed {
            return Err(ExperimentError::Mismatch("a run did not complete".into()));
        }
    }
    let (sa, a) = output::read_stats(&stats_path(manifest_a))?;
    let (sb, b) = output::read_stats(&stats_path(manifest_b))?;
    if sa != sb {
        return Err(ExperimentError::Parse(format!("stats schema mismatch: {sa} vs {sb}")));
    }
    let mut entries = Vec::new();
    let mut only_in_a = Vec::new();
    for x in &a {
        match b.iter().find(|y| y.key == x.key) {
            Some(y) => {
                let ci_overlap = match (x.ci_lo, x.ci_hi, y.ci_lo, y.ci_hi) {
                    (Some(l1), Some(h1), Some(l2), Some(h2)) => Some(l1 <= h2 && l2 <= h1),
                    _ => None,
                };
                entries.push(StatDiff {
                    key: x.key.clone(),
                    a: x.value,
                    b: y.value,
                    rel_diff: rel_diff(x.value, y.value),
                    ci_overlap,
                });
            }
            None => only_in_a.push(x.key.clone()),
        }
    }
    let only_in_b = b.iter().filter(|y| !a.iter().any(|x| x.key == y.key)).map(|y| y.key.clone()).collect();
    Ok(CompareReport {
        experiment: ma.experiment,
        entries,
        only_in_a,
        only_in_b,
    })
}
