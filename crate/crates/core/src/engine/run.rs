use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::engine::train::{accuracy, holdout_mean_loss, train_to_convergence, Labeled, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, Matrix, Mlp, ModelSnapshot};
use crate::rng::{derive_seed, stream};
use crate::scalar::Real;
use crate::strategies::{select, HoldoutCache, PoolView, SelectionInput, StrategyId, StrategyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrainMode {
    /// Keep the parameters, zero the Adam state.
    ContinueWithOptimizerReset,
    FromScratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub steps: usize,
    pub step_size: usize,
    pub train: TrainConfig,
    pub retrain_mode: RetrainMode,
    pub strategy: StrategyId,
    pub params: StrategyParams,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            step_size: 5,
            train: TrainConfig::default(),
            retrain_mode: RetrainMode::ContinueWithOptimizerReset,
            strategy: StrategyId::Random,
            params: StrategyParams::default(),
            hidden_dims: vec![256],
            dropout_rate: 0.25,
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size == 0 {
            return Err(Error::Config("step_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if matches!(self.strategy, StrategyId::McDropout | StrategyId::Bald) && self.params.mc_passes == 0 {
            return Err(Error::Config("mc_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub train_size: usize,
    pub test_accuracy: f64,
    /// Mean holdout cross-entropy after training.
    pub holdout_loss: f64,
    /// Absent at step 0.
    pub mistake_selection_rate: Option<f64>,
    pub selected_indices: Vec<usize>,
    pub epochs: usize,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub strategy: StrategyId,
    pub seed: u64,
    pub config: LoopConfig,
    pub steps: Vec<StepRecord>,
    /// The pool ran out before all steps could be taken.
    pub truncated: bool,
}

/// Fraction of `selected` samples the snapshot misclassifies; `None` for an
/// empty selection.
pub fn mistake_selection_rate<T: Real>(
    snapshot: &ModelSnapshot<T>,
    dataset: &Dataset<T>,
    selected: &[usize],
) -> Result<Option<f64>> {
    if selected.is_empty() {
        return Ok(None);
    }
    let pred = snapshot.predict(&dataset.features.select_rows(selected))?;
    let wrong = pred
        .iter()
        .zip(selected)
        .filter(|(&p, &i)| p != dataset.labels[i])
        .count();
    Ok(Some(wrong as f64 / selected.len() as f64))
}

struct Views<T> {
    train_x: Matrix<T>,
    train_y: Vec<usize>,
}

fn labeled_view<T: Real>(ds: &Dataset<T>, idx: &[usize]) -> Views<T> {
    Views {
        train_x: ds.features.select_rows(idx),
        train_y: idx.iter().map(|&i| ds.labels[i]).collect(),
    }
}

/// Runs initial training plus `cfg.steps` annotation rounds.
///
/// At each round the model trained in the previous round is frozen, the
/// strategy picks `step_size` pool samples from their features alone, the
/// mistake rate of that snapshot on the picks is recorded, the oracle
/// reveals their labels and training resumes.
pub fn run_active_learning<T: Real>(dataset: &Dataset<T>, split: &Split, cfg: &LoopConfig) -> Result<RunRecord> {
    cfg.validate()?;
    if split.max_index().is_some_and(|m| m >= dataset.len()) {
        return Err(Error::Config("split refers to indices beyond the dataset".into()));
    }
    split.check_disjoint()?;
    if split.train().is_empty() {
        return Err(Error::Config("initial training set is empty".into()));
    }
    if cfg.strategy.needs_holdout() && split.holdout().is_empty() {
        return Err(Error::Config(format!("strategy {} needs a nonempty holdout set", cfg.strategy)));
    }

    let mut dims = vec![dataset.dim()];
    dims.extend(&cfg.hidden_dims);
    dims.push(dataset.num_classes);
    let init_seed = derive_seed(cfg.seed, stream::INIT);
    let train_seed = derive_seed(cfg.seed, stream::TRAIN);
    let select_seed = derive_seed(cfg.seed, stream::SELECT);

    let holdout = labeled_view(dataset, split.holdout());
    let test = labeled_view(dataset, split.test());
    let holdout_view = Labeled {
        inputs: &holdout.train_x,
        labels: &holdout.train_y,
    };
    let test_view = Labeled {
        inputs: &test.train_x,
        labels: &test.train_y,
    };

    let mut model = Mlp::<T>::new(&dims, cfg.dropout_rate, init_seed)?;
    let mut optimizer = Adam::new(&model, cfg.train.adam);
    let mut split = split.clone();
    let mut steps = Vec::with_capacity(cfg.steps + 1);
    let mut truncated = false;

    for step in 0..=cfg.steps {
        let started = Instant::now();
        let mut selected = Vec::new();
        let mut mistake = None;
        if step > 0 {
            if split.pool().len() < cfg.step_size {
                log::warn!(
                    "{}/{} seed {}: pool has {} samples left, stopping before step {step}",
                    dataset.name,
                    cfg.strategy,
                    cfg.seed,
                    split.pool().len()
                );
                truncated = true;
                break;
            }
            let snapshot = ModelSnapshot::new(&model);
            let pool = PoolView::new(split.pool().to_vec(), dataset.features.select_rows(split.pool()))?;
            let labeled = dataset.features.select_rows(split.train());
            let cache = if cfg.strategy.needs_holdout() {
                Some(HoldoutCache::build(&snapshot, &holdout.train_x, &holdout.train_y)?)
            } else {
                None
            };
            let input = SelectionInput {
                snapshot: &snapshot,
                pool: &pool,
                labeled_features: &labeled,
                holdout: cache.as_ref(),
            };
            let choice = select(cfg.strategy, &input, cfg.step_size, &cfg.params, derive_seed(select_seed, step as u64))?;
            selected = choice.selected;
            mistake = mistake_selection_rate(&snapshot, dataset, &selected)?;
            split = split.annotate(&selected)?;
            match cfg.retrain_mode {
                RetrainMode::ContinueWithOptimizerReset => optimizer.reset(),
                RetrainMode::FromScratch => {
                    model = Mlp::new(&dims, cfg.dropout_rate, init_seed)?;
                    optimizer = Adam::new(&model, cfg.train.adam);
                }
            }
        }
        let train = labeled_view(dataset, split.train());
        let outcome = train_to_convergence(
            &mut model,
            &mut optimizer,
            Labeled {
                inputs: &train.train_x,
                labels: &train.train_y,
            },
            holdout_view,
            &cfg.train,
            derive_seed(train_seed, step as u64),
        )?;
        let record = StepRecord {
            step,
            train_size: split.train().len(),
            test_accuracy: accuracy(&model, test_view)?,
            holdout_loss: holdout_mean_loss(&model, holdout_view)?,
            mistake_selection_rate: mistake,
            selected_indices: selected,
            epochs: outcome.epochs,
            wall_time_ms: started.elapsed().as_millis() as u64,
        };
        log::info!(
            "{}/{} seed {} step {step}: train {} acc {:.4} mistakes {}",
            dataset.name,
            cfg.strategy,
            cfg.seed,
            record.train_size,
            record.test_accuracy,
            record.mistake_selection_rate.map_or("-".into(), |m| format!("{m:.3}"))
        );
        steps.push(record);
    }

    Ok(RunRecord {
        dataset: dataset.name.clone(),
        strategy: cfg.strategy,
        seed: cfg.seed,
        config: cfg.clone(),
        steps,
        truncated,
    })
}
