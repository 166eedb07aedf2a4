//! Experiment driver: JSON configs in, run records and a results CSV out.

pub mod config;
pub mod report;
pub mod results;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use holdout_al::data::{load_csv, load_idx, make_blobs, make_imbalanced_split, make_split, BlobSpec, Dataset, Split};
use holdout_al::engine::{run_active_learning, RunRecord};
use holdout_al::strategies::StrategyId;
use holdout_al::{Error, Real};

use config::{DatasetSource, ExperimentConfig, Precision, SplitMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InsufficientClass { .. } | Error::Label { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Dataset plus the indices of its official test part, if any.
pub struct Loaded<T> {
    pub dataset: Dataset<T>,
    pub fixed_test: Option<Vec<usize>>,
}

fn clean_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn load_dataset<T: Real>(source: &DatasetSource) -> Result<Loaded<T>, CliError> {
    let (mut dataset, fixed_test) = match source {
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            name,
        } => {
            let mut train = load_idx::<T>(train_images, train_labels)?;
            if let Some(n) = name {
                train.name = n.clone();
            }
            match (test_images, test_labels) {
                (Some(i), Some(l)) => {
                    let test = load_idx::<T>(i, l)?;
                    let (mut all, range) = train.concat(&test)?;
                    all.name = train.name;
                    (all, Some(range.collect()))
                }
                _ => (train, None),
            }
        }
        DatasetSource::Csv { path, has_header, test_path } => {
            let train = load_csv::<T>(path, *has_header)?;
            match test_path {
                Some(p) => {
                    let test = load_csv::<T>(p, *has_header)?;
                    let (mut all, range) = train.concat(&test)?;
                    all.name = train.name;
                    (all, Some(range.collect()))
                }
                None => (train, None),
            }
        }
        DatasetSource::Blobs {
            num_classes,
            per_class,
            dim,
            noise_sigma,
            centers_seed,
            sample_seed,
        } => {
            let ds = make_blobs::<T>(&BlobSpec {
                num_classes: *num_classes,
                per_class_counts: vec![*per_class; *num_classes],
                dim: *dim,
                centers_seed: *centers_seed,
                noise_sigma: *noise_sigma,
                sample_seed: *sample_seed,
            })?;
            (ds, None)
        }
    };
    dataset.name = clean_name(&dataset.name);
    Ok(Loaded { dataset, fixed_test })
}

pub fn build_split<T: Real>(cfg: &ExperimentConfig, data: &Loaded<T>, seed: u64) -> Result<Split, CliError> {
    let spec = cfg.split.spec(seed, data.fixed_test.clone());
    Ok(match cfg.split.mode {
        SplitMode::Balanced => make_split(&data.dataset, &spec)?,
        SplitMode::Imbalanced => make_imbalanced_split(&data.dataset, &spec, &cfg.split.imbalance)?,
    })
}

fn run_one<T: Real>(cfg: &ExperimentConfig, data: &Loaded<T>, strategy: StrategyId, seed: u64) -> Result<RunRecord, CliError> {
    let split = build_split(cfg, data, seed)?;
    let loop_cfg = cfg.loop_config(strategy, seed, data.dataset.num_classes);
    Ok(run_active_learning(&data.dataset, &split, &loop_cfg)?)
}

fn jobs(cfg: &ExperimentConfig) -> Vec<(StrategyId, u64)> {
    cfg.strategies
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect()
}

fn execute_typed<T: Real>(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, CliError> {
    let data = load_dataset::<T>(&cfg.dataset)?;
    let jobs = jobs(cfg);
    if workers <= 1 {
        return jobs.iter().map(|&(s, seed)| run_one(cfg, &data, s, seed)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|&(s, seed)| run_one(cfg, &data, s, seed)).collect())
}

/// Runs every (strategy, seed) pair of `cfg` on up to `workers` threads.
/// Records come back in config order regardless of scheduling.
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, CliError> {
    match cfg.precision {
        Precision::F64 => execute_typed::<f64>(cfg, workers),
        Precision::F32 => execute_typed::<f32>(cfg, workers),
    }
}

/// Writes one JSON file per run and merges their rows into the results CSV.
pub fn persist(dir: &Path, runs: &[RunRecord]) -> Result<PathBuf, CliError> {
    for run in runs {
        results::write_run_json(dir, run)?;
    }
    results::merge_results(dir, runs)
}

/// `run`: executes the config sequentially into its output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.resolved_output_dir();
    let runs = execute(cfg, 1)?;
    persist(&dir, &runs)
}

/// `sweep`: parallel fan-out over (strategy, seed), repeated for each
/// holdout size when `holdout_sizes` is set (one subdirectory each). A
/// report is written for every output directory after all runs finish.
pub fn cmd_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    if workers == 0 {
        return Err(CliError::Validation("--workers must be >= 1".into()));
    }
    let base = cfg.resolved_output_dir();
    let variants: Vec<(PathBuf, ExperimentConfig)> = match &cfg.holdout_sizes {
        None => vec![(base, cfg.clone())],
        Some(sizes) => sizes
            .iter()
            .map(|&h| {
                let mut c = cfg.clone();
                c.split.holdout_per_class = Some(h);
                (base.join(format!("holdout-{h}")), c)
            })
            .collect(),
    };
    let mut dirs = Vec::new();
    for (dir, c) in &variants {
        let runs = execute(c, workers)?;
        persist(dir, &runs)?;
        dirs.push(dir.clone());
    }
    for dir in &dirs {
        report::cmd_report(dir)?;
    }
    Ok(dirs)
}
