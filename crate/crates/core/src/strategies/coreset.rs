//! Greedy k-center selection in penultimate feature space.

use crate::error::{Error, Result};
use crate::nn::{Matrix, ModelSnapshot};
use crate::scalar::Real;
use crate::strategies::PoolView;

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Squared distance from each pool row to its nearest labeled row.
fn nearest_labeled<T: Real>(pool: &Matrix<T>, labeled: &Matrix<T>) -> Vec<T> {
    pool.row_iter()
        .map(|p| {
            labeled
                .row_iter()
                .map(|l| sq_dist(p, l))
                .fold(T::infinity(), T::min)
        })
        .collect()
}

/// Positions (into `pool`) chosen by greedy k-center: each pick is the
/// pool point farthest from everything labeled or already picked. Ties go
/// to the lowest position.
///
/// With no labeled points the first pick is the pool point whose nearest
/// other pool point is farthest away.
pub fn k_center_greedy<T: Real>(pool: &Matrix<T>, labeled: &Matrix<T>, k: usize) -> Result<Vec<usize>> {
    if k > pool.rows() {
        return Err(Error::Selection(format!("k = {k} exceeds pool size {}", pool.rows())));
    }
    if labeled.rows() > 0 && labeled.cols() != pool.cols() {
        return Err(Error::dim("coreset features", pool.cols(), labeled.cols()));
    }
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return Ok(chosen);
    }
    let mut min_d = if labeled.rows() > 0 {
        nearest_labeled(pool, labeled)
    } else {
        let isolation: Vec<T> = (0..pool.rows())
            .map(|i| {
                (0..pool.rows())
                    .filter(|&j| j != i)
                    .map(|j| sq_dist(pool.row(i), pool.row(j)))
                    .fold(T::infinity(), T::min)
            })
            .collect();
        let first = argmax_first(&isolation);
        chosen.push(first);
        let c = pool.row(first);
        pool.row_iter().map(|p| sq_dist(p, c)).collect()
    };
    while chosen.len() < k {
        let next = argmax_first(&min_d);
        chosen.push(next);
        let c = pool.row(next).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(pool.row(i), &c));
        }
        min_d[next] = T::neg_infinity();
    }
    Ok(chosen)
}

fn argmax_first<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Largest distance from any pool point to its nearest center
/// (labeled points plus `chosen`).
pub fn cover_radius<T: Real>(pool: &Matrix<T>, labeled: &Matrix<T>, chosen: &[usize]) -> T {
    let centers = if labeled.rows() > 0 {
        labeled.vstack(&pool.select_rows(chosen)).expect("same width")
    } else {
        pool.select_rows(chosen)
    };
    nearest_labeled(pool, &centers)
        .into_iter()
        .fold(T::zero(), T::max)
        .sqrt()
}

/// Core-set selection on the snapshot's penultimate features; returns
/// dataset indices.
pub fn select_coreset_greedy<T: Real>(
    snapshot: &ModelSnapshot<T>,
    pool: &PoolView<T>,
    train_inputs: &Matrix<T>,
    k: usize,
) -> Result<Vec<usize>> {
    let pf = snapshot.penultimate_features(pool.features())?;
    let tf = if train_inputs.rows() > 0 {
        snapshot.penultimate_features(train_inputs)?
    } else {
        Matrix::zeros(0, pf.cols())
    };
    Ok(k_center_greedy(&pf, &tf, k)?
        .into_iter()
        .map(|p| pool.indices()[p])
        .collect())
}
