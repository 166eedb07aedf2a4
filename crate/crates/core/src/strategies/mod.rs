//! Acquisition criteria. Every strategy reads a frozen [`ModelSnapshot`]
//! and the pool's input features; pool labels are not part of any
//! signature here.

mod badge;
mod coreset;
mod holdout;
mod uncertainty;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use badge::{badge_embedding, select_badge};
pub use coreset::{cover_radius, k_center_greedy, select_coreset_greedy};
pub use holdout::{kernel_value, score_err_reduction, score_ours, score_ours_app, HoldoutCache, OursConfig};
pub use uncertainty::{bald_from_passes, predictive_entropy, score_bald, score_entropy, score_mc_dropout};

use crate::error::{Error, Result};
use crate::nn::{Matrix, ModelSnapshot};
use crate::rng::rng_from;
use crate::scalar::Real;

/// Stable strategy identifiers used in configs, file names and CSV rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    Random,
    Entropy,
    McDropout,
    Bald,
    Coreset,
    Badge,
    ErrReduction,
    Ours,
    OursApp,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::Random,
        StrategyId::Entropy,
        StrategyId::McDropout,
        StrategyId::Bald,
        StrategyId::Coreset,
        StrategyId::Badge,
        StrategyId::ErrReduction,
        StrategyId::Ours,
        StrategyId::OursApp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Random => "random",
            StrategyId::Entropy => "entropy",
            StrategyId::McDropout => "mc_dropout",
            StrategyId::Bald => "bald",
            StrategyId::Coreset => "coreset",
            StrategyId::Badge => "badge",
            StrategyId::ErrReduction => "err_reduction",
            StrategyId::Ours => "ours",
            StrategyId::OursApp => "ours_app",
        }
    }

    pub fn needs_holdout(self) -> bool {
        matches!(self, StrategyId::Ours | StrategyId::OursApp)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = StrategyId::ALL.iter().map(|id| id.as_str()).collect();
                Error::Config(format!("unknown strategy '{s}'; valid ids: {}", valid.join(", ")))
            })
    }
}

impl Serialize for StrategyId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StrategyId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A pool sample with its acquisition score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate<T = f64> {
    /// Dataset index of the sample.
    pub pool_index: usize,
    pub score: T,
    /// Argmax of the snapshot's eval softmax.
    pub pseudo_label: usize,
    /// Filled in by the loop for reporting only.
    pub eval_only_is_wrong: Option<bool>,
}

/// Pool indices together with their input features (and nothing else).
#[derive(Debug, Clone)]
pub struct PoolView<T = f64> {
    indices: Vec<usize>,
    features: Matrix<T>,
}

impl<T: Real> PoolView<T> {
    pub fn new(indices: Vec<usize>, features: Matrix<T>) -> Result<Self> {
        if indices.len() != features.rows() {
            return Err(Error::dim("pool view", indices.len(), features.rows()));
        }
        Ok(Self { indices, features })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Restriction to the given positions.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            indices: positions.iter().map(|&p| self.indices[p]).collect(),
            features: self.features.select_rows(positions),
        }
    }
}

/// The `k` best candidates by descending score; equal scores are ordered by
/// ascending pool index.
pub fn top_k<T: Real>(candidates: &[ScoredCandidate<T>], k: usize) -> Result<Vec<usize>> {
    if k > candidates.len() {
        return Err(Error::Selection(format!("k = {k} exceeds {} candidates", candidates.len())));
    }
    let mut order: Vec<&ScoredCandidate<T>> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.pool_index.cmp(&b.pool_index))
    });
    Ok(order.into_iter().take(k).map(|c| c.pool_index).collect())
}

/// Uniform sample without replacement.
pub fn select_random(pool_indices: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > pool_indices.len() {
        return Err(Error::Selection(format!("k = {k} exceeds pool size {}", pool_indices.len())));
    }
    let picks = rand::seq::index::sample(&mut rng_from(seed), pool_indices.len(), k);
    Ok(picks.into_iter().map(|p| pool_indices[p]).collect())
}

/// Per-strategy knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    pub ours: OursConfig,
    /// Dropout passes for mc_dropout and bald.
    pub mc_passes: usize,
    /// Pool subset used by err_reduction to estimate expected error.
    pub err_subset_size: usize,
    /// Score only a seeded subset of this many pool samples.
    pub pool_subsample: Option<usize>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            ours: OursConfig::default(),
            mc_passes: 25,
            err_subset_size: 1000,
            pool_subsample: None,
        }
    }
}

/// Everything a strategy may look at when choosing a batch.
pub struct SelectionInput<'a, T = f64> {
    pub snapshot: &'a ModelSnapshot<T>,
    pub pool: &'a PoolView<T>,
    /// Input features of the labeled training set (coreset coverage).
    pub labeled_features: &'a Matrix<T>,
    pub holdout: Option<&'a HoldoutCache<T>>,
}

#[derive(Debug, Clone)]
pub struct Selection<T = f64> {
    /// Dataset indices, in selection order.
    pub selected: Vec<usize>,
    /// Scores, for score-then-rank strategies.
    pub candidates: Option<Vec<ScoredCandidate<T>>>,
}

/// Runs strategy `id` and returns `k` pool indices.
pub fn select<T: Real>(
    id: StrategyId,
    input: &SelectionInput<'_, T>,
    k: usize,
    params: &StrategyParams,
    seed: u64,
) -> Result<Selection<T>> {
    let full = input.pool;
    if k > full.len() {
        return Err(Error::Selection(format!("k = {k} exceeds pool size {}", full.len())));
    }
    let sub;
    let pool = match params.pool_subsample {
        Some(m) if m < full.len() => {
            let m = m.max(k);
            let mut pos = rand::seq::index::sample(&mut rng_from(seed ^ 0x5355_4253), full.len(), m).into_vec();
            pos.sort_unstable();
            sub = full.subset(&pos);
            &sub
        }
        _ => full,
    };
    let snap = input.snapshot;
    let holdout = || {
        input
            .holdout
            .ok_or_else(|| Error::Config(format!("strategy {id} needs a holdout cache")))
    };
    let scored = match id {
        StrategyId::Random => None,
        StrategyId::Coreset => None,
        StrategyId::Badge => None,
        StrategyId::Entropy => Some(score_entropy(snap, pool)?),
        StrategyId::McDropout => Some(score_mc_dropout(snap, pool, params.mc_passes, seed)?),
        StrategyId::Bald => Some(score_bald(snap, pool, params.mc_passes, seed)?),
        StrategyId::ErrReduction => Some(score_err_reduction(snap, pool, seed, params.err_subset_size, &params.ours)?),
        StrategyId::Ours => Some(score_ours(snap, pool, holdout()?, &params.ours)?),
        StrategyId::OursApp => Some(score_ours_app(snap, pool, holdout()?)?),
    };
    let selected = match (&scored, id) {
        (Some(c), _) => top_k(c, k)?,
        (None, StrategyId::Random) => select_random(pool.indices(), k, seed)?,
        (None, StrategyId::Coreset) => select_coreset_greedy(snap, pool, input.labeled_features, k)?,
        (None, _) => select_badge(snap, pool, k, seed)?,
    };
    Ok(Selection {
        selected,
        candidates: scored,
    })
}
