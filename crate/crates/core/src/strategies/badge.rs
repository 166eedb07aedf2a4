//! Gradient-embedding k-means++ seeding.
//!
//! The embedding of a sample is the output-layer weight gradient under its
//! pseudo label, `(p - onehot(yhat)) (x) phi`. Distances are evaluated in
//! factored form, `|a (x) u - b (x) v|^2 = |a|^2|u|^2 + |b|^2|v|^2 - 2(a.b)(u.v)`,
//! so the `C * d` vectors are never built during selection.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::loss::softmax_into;
use crate::nn::{dot, sq_norm, Matrix, ModelSnapshot};
use crate::rng::rng_from;
use crate::scalar::Real;
use crate::strategies::holdout::pool_outputs;
use crate::strategies::PoolView;

struct Factors<T> {
    residual: Matrix<T>,
    features: Matrix<T>,
}

fn factors<T: Real>(snapshot: &ModelSnapshot<T>, pool: &PoolView<T>) -> Result<Factors<T>> {
    let out = pool_outputs(snapshot, pool)?;
    let mut residual = Matrix::zeros(out.logits.rows(), out.logits.cols());
    for i in 0..out.logits.rows() {
        softmax_into(out.logits.row(i), residual.row_mut(i));
        residual[(i, out.pseudo[i])] -= T::one();
    }
    Ok(Factors {
        residual,
        features: out.features,
    })
}

/// Explicit embeddings, one row of length `C * d` per pool sample, laid out
/// class-major (`row[c * d + j] = residual_c * phi_j`).
pub fn badge_embedding<T: Real>(snapshot: &ModelSnapshot<T>, pool: &PoolView<T>) -> Result<Matrix<T>> {
    let f = factors(snapshot, pool)?;
    let (c, d) = (f.residual.cols(), f.features.cols());
    let mut out = Matrix::zeros(pool.len(), c * d);
    for i in 0..pool.len() {
        let row = out.row_mut(i);
        for (k, &a) in f.residual.row(i).iter().enumerate() {
            for (j, &u) in f.features.row(i).iter().enumerate() {
                row[k * d + j] = a * u;
            }
        }
    }
    Ok(out)
}

/// Draws an index with probability proportional to `weights`; `None` when
/// all weights are zero.
fn weighted_draw<T: Real>(weights: &[T], rng: &mut crate::rng::Rng) -> Option<usize> {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last_positive
}

/// k-means++ seeding over the gradient embeddings; returns dataset indices.
/// The first center is drawn proportionally to the squared embedding norm,
/// later ones proportionally to the squared distance to the nearest center.
/// When every remaining weight is zero the rest is filled uniformly at
/// random.
pub fn select_badge<T: Real>(snapshot: &ModelSnapshot<T>, pool: &PoolView<T>, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > pool.len() {
        return Err(Error::Selection(format!("k = {k} exceeds pool size {}", pool.len())));
    }
    let f = factors(snapshot, pool)?;
    let n = pool.len();
    let a_sq: Vec<T> = f.residual.row_iter().map(sq_norm).collect();
    let u_sq: Vec<T> = f.features.row_iter().map(sq_norm).collect();
    let norms: Vec<T> = a_sq.iter().zip(&u_sq).map(|(&a, &u)| a * u).collect();

    let mut rng = rng_from(seed);
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(k);
    let mut weights = norms.clone();
    while chosen.len() < k {
        let pick = weighted_draw(&weights, &mut rng).unwrap_or_else(|| {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        });
        taken[pick] = true;
        chosen.push(pick);
        let (ac, uc) = (f.residual.row(pick), f.features.row(pick));
        let first = chosen.len() == 1;
        for i in 0..n {
            if taken[i] {
                weights[i] = T::zero();
                continue;
            }
            let cross = dot(f.residual.row(i), ac) * dot(f.features.row(i), uc);
            let d2 = (norms[i] + norms[pick] - (cross + cross)).max(T::zero());
            weights[i] = if first { d2 } else { weights[i].min(d2) };
        }
    }
    Ok(chosen.into_iter().map(|p| pool.indices()[p]).collect())
}
