use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use holdout_al::data::{ImbalanceSpec, SplitSpec, TestSet};
use holdout_al::engine::{LoopConfig, RetrainMode, TrainConfig};
use holdout_al::strategies::{StrategyId, StrategyParams};

use crate::CliError;

/// Environment variable naming the output directory used when neither the
/// config nor `--output-dir` sets one.
pub const OUTPUT_DIR_ENV: &str = "HOLDOUT_AL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// IDX image/label pairs. Without test files a stratified fraction of
    /// the training file is held out for testing.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        name: Option<String>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    Blobs {
        num_classes: usize,
        per_class: usize,
        dim: usize,
        #[serde(default = "default_sigma")]
        noise_sigma: f64,
        #[serde(default)]
        centers_seed: u64,
        #[serde(default)]
        sample_seed: u64,
    },
}

fn default_sigma() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Balanced,
    Imbalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    /// Balanced per-class size; the imbalanced protocol derives its counts
    /// from it.
    pub initial_per_class: usize,
    #[serde(default)]
    pub holdout_per_class: Option<usize>,
    #[serde(default)]
    pub pool_per_class: Option<usize>,
    /// Used when the source has no separate test data.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub imbalance: ImbalanceSpec,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl SplitConfig {
    pub fn spec(&self, seed: u64, fixed_test: Option<Vec<usize>>) -> SplitSpec {
        SplitSpec {
            initial_per_class: self.initial_per_class,
            holdout_per_class: self.holdout_per_class,
            pool_per_class: self.pool_per_class,
            test: fixed_test.map_or(TestSet::Fraction(self.test_fraction), TestSet::Fixed),
            seed,
        }
    }

    /// 10% of the balanced initial set, doubled in the imbalanced protocol.
    pub fn default_step_size(&self, num_classes: usize) -> usize {
        let base = ((self.initial_per_class * num_classes) as f64 * 0.1).round() as usize;
        let base = base.max(1);
        match self.mode {
            SplitMode::Balanced => base,
            SplitMode::Imbalanced => 2 * base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Loop settings shared by every (strategy, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSettings {
    pub steps: usize,
    /// Derived from the split when absent.
    pub step_size: Option<usize>,
    pub train: TrainConfig,
    pub retrain_mode: RetrainMode,
    pub params: StrategyParams,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for LoopSettings {
    fn default() -> Self {
        let d = LoopConfig::default();
        Self {
            steps: d.steps,
            step_size: None,
            train: d.train,
            retrain_mode: d.retrain_mode,
            params: d.params,
            hidden_dims: d.hidden_dims,
            dropout_rate: d.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    #[serde(default, rename = "loop")]
    pub loop_settings: LoopSettings,
    pub strategies: Vec<StrategyId>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    /// `sweep` repeats every run once per holdout size (per class).
    #[serde(default)]
    pub holdout_sizes: Option<Vec<usize>>,
}

/// Command line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub strategies: Option<Vec<StrategyId>>,
    pub steps: Option<usize>,
    pub step_size: Option<usize>,
    pub initial_per_class: Option<usize>,
    pub holdout_per_class: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads and validates a config file. Relative dataset and output paths
    /// are taken relative to the file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(train_images);
                fix(train_labels);
                test_images.as_mut().map(fix);
                test_labels.as_mut().map(fix);
            }
            DatasetSource::Csv { path, test_path, .. } => {
                fix(path);
                test_path.as_mut().map(fix);
            }
            DatasetSource::Blobs { .. } => {}
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(s) = &o.strategies {
            self.strategies = s.clone();
        }
        if let Some(s) = o.steps {
            self.loop_settings.steps = s;
        }
        if o.step_size.is_some() {
            self.loop_settings.step_size = o.step_size;
        }
        if let Some(n) = o.initial_per_class {
            self.split.initial_per_class = n;
        }
        if o.holdout_per_class.is_some() {
            self.split.holdout_per_class = o.holdout_per_class;
        }
        if o.output_dir.is_some() {
            self.output_dir = o.output_dir.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if self.strategies.is_empty() {
            return bad("strategies: at least one strategy is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return bad("strategies: duplicate entries".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds: duplicate entries".into());
        }
        if self.split.initial_per_class == 0 {
            return bad("split.initial_per_class must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return bad(format!("split.test_fraction must lie in [0, 1), got {}", self.split.test_fraction));
        }
        if self.split.holdout_per_class == Some(0) || self.holdout_sizes.as_ref().is_some_and(|h| h.contains(&0)) {
            return bad("holdout sizes must be >= 1 per class".into());
        }
        if self.loop_settings.step_size == Some(0) {
            return bad("loop.step_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.loop_settings.dropout_rate) {
            return bad(format!("loop.dropout_rate must lie in [0, 1), got {}", self.loop_settings.dropout_rate));
        }
        if self.loop_settings.train.max_epochs == 0 {
            return bad("loop.train.max_epochs must be >= 1".into());
        }
        if self.loop_settings.params.mc_passes == 0 {
            return bad("loop.params.mc_passes must be >= 1".into());
        }
        let exists = |p: &Path, field: &str| {
            if p.exists() {
                Ok(())
            } else {
                bad(format!("dataset.{field}: {} does not exist", p.display()))
            }
        };
        match &self.dataset {
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                exists(train_images, "train_images")?;
                exists(train_labels, "train_labels")?;
                match (test_images, test_labels) {
                    (Some(i), Some(l)) => {
                        exists(i, "test_images")?;
                        exists(l, "test_labels")?;
                    }
                    (None, None) => {}
                    _ => return bad("dataset: test_images and test_labels go together".into()),
                }
            }
            DatasetSource::Csv { path, test_path, .. } => {
                exists(path, "path")?;
                if let Some(p) = test_path {
                    exists(p, "test_path")?;
                }
            }
            DatasetSource::Blobs {
                num_classes,
                per_class,
                dim,
                noise_sigma,
                ..
            } => {
                if *num_classes < 2 {
                    return bad("dataset.num_classes must be >= 2".into());
                }
                if *per_class == 0 {
                    return bad("dataset.per_class must be >= 1".into());
                }
                if *dim < 2 {
                    return bad("dataset.dim must be >= 2".into());
                }
                if !(*noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                    return bad("dataset.noise_sigma must be finite and >= 0".into());
                }
            }
        }
        Ok(())
    }

    /// Output directory: config or flag, then the environment, then
    /// `results`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn loop_config(&self, strategy: StrategyId, seed: u64, num_classes: usize) -> LoopConfig {
        let s = &self.loop_settings;
        LoopConfig {
            steps: s.steps,
            step_size: s.step_size.unwrap_or_else(|| self.split.default_step_size(num_classes)),
            train: s.train.clone(),
            retrain_mode: s.retrain_mode,
            strategy,
            params: s.params.clone(),
            hidden_dims: s.hidden_dims.clone(),
            dropout_rate: s.dropout_rate,
            seed,
        }
    }
}
