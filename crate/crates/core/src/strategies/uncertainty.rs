use crate::error::{Error, Result};
use crate::nn::loss::{entropy, entropy_from_logits};
use crate::nn::{Matrix, ModelSnapshot};
use crate::scalar::Real;
use crate::strategies::holdout::{candidates, pool_outputs};
use crate::strategies::{PoolView, ScoredCandidate};

/// Predictive entropy of the eval-mode softmax.
pub fn score_entropy<T: Real>(snapshot: &ModelSnapshot<T>, pool: &PoolView<T>) -> Result<Vec<ScoredCandidate<T>>> {
    let out = pool_outputs(snapshot, pool)?;
    let scores = out.logits.row_iter().map(entropy_from_logits).collect();
    Ok(candidates(pool, &out.pseudo, scores))
}

fn mean_probs<T: Real>(passes: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = passes
        .first()
        .ok_or_else(|| Error::Config("need at least one dropout pass".into()))?;
    let mut mean = Matrix::zeros(first.rows(), first.cols());
    for p in passes {
        if p.shape() != first.shape() {
            return Err(Error::dim("dropout passes", format!("{:?}", first.shape()), format!("{:?}", p.shape())));
        }
        for (m, &x) in mean.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *m += x;
        }
    }
    mean.scale(T::one() / T::from_usize_exact(passes.len()));
    Ok(mean)
}

/// Entropy of the pass-averaged distribution, per sample.
pub fn predictive_entropy<T: Real>(passes: &[Matrix<T>]) -> Result<Vec<T>> {
    Ok(mean_probs(passes)?.row_iter().map(entropy).collect())
}

/// Mutual information between prediction and dropout mask:
/// `H[mean_t p_t] - mean_t H[p_t]`, floored at zero.
pub fn bald_from_passes<T: Real>(passes: &[Matrix<T>]) -> Result<Vec<T>> {
    let total = predictive_entropy(passes)?;
    let n = T::from_usize_exact(passes.len());
    Ok(total
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let expected: T = passes.iter().map(|p| entropy(p.row(i))).sum::<T>() / n;
            (h - expected).max(T::zero())
        })
        .collect())
}

/// Predictive entropy of the MC-dropout mean.
pub fn score_mc_dropout<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    passes: usize,
    seed: u64,
) -> Result<Vec<ScoredCandidate<T>>> {
    let pseudo = snapshot.predict(pool.features())?;
    let probs = snapshot.mc_dropout_probs(pool.features(), passes, seed)?;
    Ok(candidates(pool, &pseudo, predictive_entropy(&probs)?))
}

pub fn score_bald<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    passes: usize,
    seed: u64,
) -> Result<Vec<ScoredCandidate<T>>> {
    let pseudo = snapshot.predict(pool.features())?;
    let probs = snapshot.mc_dropout_probs(pool.features(), passes, seed)?;
    Ok(candidates(pool, &pseudo, bald_from_passes(&probs)?))
}
