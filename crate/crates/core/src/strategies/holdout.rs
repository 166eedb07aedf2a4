//! Holdout-loss criteria: pseudo-label fine-tuning followed by the change
//! of the holdout loss, its first-order gradient form, the gradient kernel
//! behind it, and expected error reduction (which reuses the same
//! fine-tuning step).
//!
//! All of them act on the output layer only. Fine-tuning the output layer
//! on a single sample with feature vector `phi` only ever moves the weights
//! along `phi`: after `t` SGD steps with residuals `g_1..g_t`
//! (`softmax - onehot`), `W = W0 - eta * phi (sum g)^T` and
//! `b = b0 - eta * sum g`. The logits of any other sample with features
//! `psi` therefore shift by `-eta * (phi . psi + 1) * sum g`, which is what
//! the scoring loops below evaluate instead of materialising updated
//! weight matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{check_labels, entropy_from_logits, log_sum_exp, softmax, softmax_into};
use crate::nn::{dot, sq_norm, Dense, ForwardMode, GradScope, Matrix, ModelSnapshot};
use crate::rng::rng_from;
use crate::scalar::Real;
use crate::strategies::{PoolView, ScoredCandidate};

/// Inner fine-tuning for the holdout-loss criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OursConfig {
    pub eta: f64,
    pub inner_iterations: usize,
}

impl Default for OursConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            inner_iterations: 3,
        }
    }
}

impl OursConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Everything the holdout criteria need from the labeled holdout set at
/// one snapshot. The holdout loss is the sum over holdout samples.
#[derive(Debug, Clone)]
pub struct HoldoutCache<T = f64> {
    fingerprint: u64,
    features: Matrix<T>,
    labels: Vec<usize>,
    logits: Matrix<T>,
    probs: Matrix<T>,
    loss: T,
    grad: Dense<T>,
}

impl<T: Real> HoldoutCache<T> {
    pub fn build(snapshot: &ModelSnapshot<T>, inputs: &Matrix<T>, labels: &[usize]) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Config("holdout set is empty".into()));
        }
        check_labels(labels, inputs.rows(), snapshot.num_classes())?;
        let features = snapshot.penultimate_features(inputs)?;
        let logits = snapshot.last_layer().apply(&features)?;
        let probs = softmax(&logits);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(j, &y)| log_sum_exp(logits.row(j)) - logits[(j, y)])
            .sum();
        let mut residual = probs.clone();
        for (j, &y) in labels.iter().enumerate() {
            residual[(j, y)] -= T::one();
        }
        let grad = Dense {
            weight: features.t_matmul(&residual)?,
            bias: residual.sum_rows(),
        };
        Ok(Self {
            fingerprint: snapshot.fingerprint(),
            features,
            labels: labels.to_vec(),
            logits,
            probs,
            loss,
            grad,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Summed holdout cross-entropy at the snapshot.
    pub fn loss(&self) -> T {
        self.loss
    }

    /// Gradient of the summed holdout loss w.r.t. the output layer.
    pub fn gradient(&self) -> &Dense<T> {
        &self.grad
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn logits(&self) -> &Matrix<T> {
        &self.logits
    }

    fn check(&self, snapshot: &ModelSnapshot<T>) -> Result<()> {
        if self.fingerprint != snapshot.fingerprint() {
            return Err(Error::State("holdout cache was built for a different snapshot".into()));
        }
        Ok(())
    }
}

/// Eval-mode penultimate features, logits and pseudo labels of the pool.
pub(crate) struct PoolOutputs<T> {
    pub features: Matrix<T>,
    pub logits: Matrix<T>,
    pub pseudo: Vec<usize>,
}

pub(crate) fn pool_outputs<T: Real>(snapshot: &ModelSnapshot<T>, pool: &PoolView<T>) -> Result<PoolOutputs<T>> {
    let features = snapshot.penultimate_features(pool.features())?;
    let logits = snapshot.last_layer().apply(&features)?;
    let pseudo = logits.argmax_rows();
    Ok(PoolOutputs {
        features,
        logits,
        pseudo,
    })
}

/// Runs the single-sample SGD loop in logit space and returns the summed
/// residuals `sum_t (softmax(z_t) - onehot(label))`.
pub(crate) fn accumulated_residual<T: Real>(z0: &[T], phi_sq: T, label: usize, eta: T, iters: usize) -> Vec<T> {
    let c = z0.len();
    let mut z = z0.to_vec();
    let mut p = vec![T::zero(); c];
    let mut acc = vec![T::zero(); c];
    let step = eta * (phi_sq + T::one());
    for _ in 0..iters {
        softmax_into(&z, &mut p);
        p[label] -= T::one();
        for k in 0..c {
            acc[k] += p[k];
            z[k] -= step * p[k];
        }
    }
    acc
}

/// `xent(z + delta, y) - xent(z, y)` given `p = softmax(z)`, accurate for
/// tiny `delta`.
#[inline]
fn xent_change<T: Real>(p: &[T], delta: &[T], y: usize) -> T {
    let s: T = p.iter().zip(delta).map(|(&pk, &d)| pk * d.exp_m1()).sum();
    s.ln_1p() - delta[y]
}

/// Fine-tunes the output layer on each pool sample's pseudo label and
/// scores the sample by the resulting change of the summed holdout loss.
/// Positive scores mean the pseudo label hurts the holdout set.
pub fn score_ours<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    holdout: &HoldoutCache<T>,
    cfg: &OursConfig,
) -> Result<Vec<ScoredCandidate<T>>> {
    cfg.validate()?;
    holdout.check(snapshot)?;
    let out = pool_outputs(snapshot, pool)?;
    // phi_i . phi_j for every (pool, holdout) pair
    let cross = out.features.matmul_t(&holdout.features)?;
    let eta = T::lit(cfg.eta);
    let c = snapshot.num_classes();
    let scores: Vec<T> = (0..pool.len())
        .into_par_iter()
        .map(|i| {
            let phi = out.features.row(i);
            let acc = accumulated_residual(out.logits.row(i), sq_norm(phi), out.pseudo[i], eta, cfg.inner_iterations);
            if acc.iter().all(|&a| a == T::zero()) {
                return T::zero();
            }
            let mut delta = vec![T::zero(); c];
            let mut total = T::zero();
            for (j, &y) in holdout.labels.iter().enumerate() {
                let w = -eta * (cross[(i, j)] + T::one());
                for k in 0..c {
                    delta[k] = w * acc[k];
                }
                total += xent_change(holdout.probs.row(j), &delta, y);
            }
            total
        })
        .collect();
    Ok(candidates(pool, &out.pseudo, scores))
}

/// First-order form of [`score_ours`]: minus the dot product between the
/// holdout-loss gradient and the pool sample's pseudo-label gradient, both
/// w.r.t. the output layer. No parameters are updated.
pub fn score_ours_app<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    holdout: &HoldoutCache<T>,
) -> Result<Vec<ScoredCandidate<T>>> {
    holdout.check(snapshot)?;
    let out = pool_outputs(snapshot, pool)?;
    // G_W^T phi + g_b for each pool row
    let mut proj = out.features.matmul(&holdout.grad.weight)?;
    proj.add_row_vector(&holdout.grad.bias)?;
    let c = snapshot.num_classes();
    let mut p = vec![T::zero(); c];
    let scores = (0..pool.len())
        .map(|i| {
            softmax_into(out.logits.row(i), &mut p);
            p[out.pseudo[i]] -= T::one();
            -dot(&p, proj.row(i))
        })
        .collect();
    Ok(candidates(pool, &out.pseudo, scores))
}

/// Dot product of the output-layer loss gradients of two (sample, label)
/// pairs.
pub fn kernel_value<T: Real>(snapshot: &ModelSnapshot<T>, x_i: &[T], y_i: usize, x_j: &[T], y_j: usize) -> Result<T> {
    let grad = |x: &[T], y: usize| -> Result<Dense<T>> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (_, cache) = snapshot.forward(&input, ForwardMode::Eval)?;
        let g = snapshot.backward(&cache, &[y], GradScope::LastLayerOnly)?;
        Ok(g.layers.into_iter().next().expect("one layer"))
    };
    Ok(grad(x_i, y_i)?.dot(&grad(x_j, y_j)?))
}

/// Expected error reduction: fine-tune on each candidate's pseudo label and
/// measure the drop of the mean predictive entropy over a fixed seeded
/// subset of the pool. Higher means a larger expected reduction.
pub fn score_err_reduction<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    subset_seed: u64,
    subset_size: usize,
    cfg: &OursConfig,
) -> Result<Vec<ScoredCandidate<T>>> {
    cfg.validate()?;
    if subset_size == 0 {
        return Err(Error::Config("err_reduction subset_size must be >= 1".into()));
    }
    let out = pool_outputs(snapshot, pool)?;
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let m = subset_size.min(pool.len());
    let mut subset = rand::seq::index::sample(&mut rng_from(subset_seed), pool.len(), m).into_vec();
    subset.sort_unstable();
    let sub_feats = out.features.select_rows(&subset);
    let sub_logits = out.logits.select_rows(&subset);
    let mf = T::from_usize_exact(m);
    let base: T = sub_logits.row_iter().map(entropy_from_logits).sum::<T>() / mf;
    let eta = T::lit(cfg.eta);
    let c = snapshot.num_classes();

    let chunk = 128;
    let scores: Vec<T> = (0..pool.len())
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|ids| -> Result<Vec<T>> {
            let block = out.features.select_rows(ids);
            let cross = block.matmul_t(&sub_feats)?;
            let mut z = vec![T::zero(); c];
            Ok(ids
                .iter()
                .enumerate()
                .map(|(r, &i)| {
                    let phi = out.features.row(i);
                    let acc =
                        accumulated_residual(out.logits.row(i), sq_norm(phi), out.pseudo[i], eta, cfg.inner_iterations);
                    if acc.iter().all(|&a| a == T::zero()) {
                        return T::zero();
                    }
                    let mut updated = T::zero();
                    for s in 0..m {
                        let w = -eta * (cross[(r, s)] + T::one());
                        for k in 0..c {
                            z[k] = sub_logits[(s, k)] + w * acc[k];
                        }
                        updated += entropy_from_logits(&z);
                    }
                    base - updated / mf
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(candidates(pool, &out.pseudo, scores))
}

pub(crate) fn candidates<T: Real>(pool: &PoolView<T>, pseudo: &[usize], scores: Vec<T>) -> Vec<ScoredCandidate<T>> {
    pool.indices()
        .iter()
        .zip(pseudo)
        .zip(scores)
        .map(|((&pool_index, &pseudo_label), score)| ScoredCandidate {
            pool_index,
            score,
            pseudo_label,
            eval_only_is_wrong: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sgd_step_dense, Mlp};
    use rand::Rng as _;

    fn random_inputs(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = rng_from(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[allow(clippy::type_complexity)]
    fn setup() -> (ModelSnapshot<f64>, PoolView<f64>, HoldoutCache<f64>, Matrix<f64>, Vec<usize>) {
        let model = Mlp::<f64>::new(&[5, 8, 3], 0.0, 21).unwrap();
        let snap = ModelSnapshot::new(&model);
        let pool_x = random_inputs(12, 5, 1);
        let pool = PoolView::new((100..112).collect(), pool_x).unwrap();
        let hx = random_inputs(6, 5, 2);
        let hy = vec![0, 1, 2, 0, 1, 2];
        let cache = HoldoutCache::build(&snap, &hx, &hy).unwrap();
        (snap, pool, cache, hx, hy)
    }

    /// Explicit route: clone the output layer, take SGD steps on the
    /// pseudo-labeled sample, recompute the summed holdout loss.
    fn explicit_score(snap: &ModelSnapshot<f64>, x: &[f64], hx: &Matrix<f64>, hy: &[usize], eta: f64, iters: usize) -> f64 {
        let input = Matrix::from_vec(1, x.len(), x.to_vec()).unwrap();
        let yhat = snap.predict(&input).unwrap()[0];
        let mut layer = snap.last_layer().clone();
        for _ in 0..iters {
            let mut m = snap.to_model();
            *m.last_layer_mut() = layer.clone();
            let (_, cache) = m.forward(&input, ForwardMode::Eval).unwrap();
            let g = m.backward(&cache, &[yhat], GradScope::LastLayerOnly).unwrap();
            sgd_step_dense(&mut layer, g.last(), eta).unwrap();
        }
        let hphi = snap.penultimate_features(hx).unwrap();
        let loss = |l: &Dense<f64>| -> f64 {
            let z = l.apply(&hphi).unwrap();
            hy.iter().enumerate().map(|(j, &y)| log_sum_exp(z.row(j)) - z[(j, y)]).sum()
        };
        loss(&layer) - loss(snap.last_layer())
    }

    #[test]
    fn closed_form_matches_explicit_fine_tuning() {
        let (snap, pool, cache, hx, hy) = setup();
        for iters in [1, 3] {
            let cfg = OursConfig {
                eta: 0.05,
                inner_iterations: iters,
            };
            let got = score_ours(&snap, &pool, &cache, &cfg).unwrap();
            for (i, c) in got.iter().enumerate() {
                let want = explicit_score(&snap, pool.features().row(i), &hx, &hy, cfg.eta, iters);
                assert!((c.score - want).abs() < 1e-12, "{} vs {}", c.score, want);
                assert_eq!(c.pool_index, 100 + i);
            }
        }
    }

    #[test]
    fn zero_iterations_score_zero() {
        let (snap, pool, cache, ..) = setup();
        let cfg = OursConfig {
            eta: 1e-3,
            inner_iterations: 0,
        };
        assert!(score_ours(&snap, &pool, &cache, &cfg).unwrap().iter().all(|c| c.score == 0.0));
        let er = score_err_reduction(&snap, &pool, 3, 5, &cfg).unwrap();
        assert!(er.iter().all(|c| c.score == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let (snap, pool, cache, ..) = setup();
        let mut other = snap.to_model();
        other.last_layer_mut().bias[0] += 0.1;
        let other = ModelSnapshot::new(&other);
        assert!(matches!(score_ours_app(&other, &pool, &cache), Err(Error::State(_))));
    }

    #[test]
    fn empty_holdout_is_a_config_error() {
        let (snap, ..) = setup();
        assert!(matches!(
            HoldoutCache::build(&snap, &Matrix::zeros(0, 5), &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn holdout_gradient_is_sum_of_per_sample_gradients() {
        let (snap, _, cache, hx, hy) = setup();
        let mut sum = snap.last_layer().zeros_like();
        for (j, &y) in hy.iter().enumerate() {
            let (_, fc) = snap.forward(&hx.select_rows(&[j]), ForwardMode::Eval).unwrap();
            let g = snap.backward(&fc, &[y], GradScope::LastLayerOnly).unwrap();
            for (s, &v) in sum.iter_mut().zip(g.last().iter()) {
                *s += v;
            }
        }
        for (a, b) in sum.iter().zip(cache.gradient().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn err_reduction_is_reproducible() {
        let (snap, pool, ..) = setup();
        let cfg = OursConfig::default();
        let a = score_err_reduction(&snap, &pool, 9, 6, &cfg).unwrap();
        let b = score_err_reduction(&snap, &pool, 9, 6, &cfg).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.score.to_bits() == y.score.to_bits()));
        assert!(score_err_reduction(&snap, &pool, 9, 0, &cfg).is_err());
    }
}
