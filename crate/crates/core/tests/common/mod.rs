#![allow(dead_code)]

use holdout_al::data::{make_blobs, BlobSpec, Dataset};
use holdout_al::nn::{Matrix, Mlp, ModelSnapshot};
use holdout_al::rng::rng_from;
use holdout_al::strategies::PoolView;
use rand::Rng;

pub fn uniform(rows: usize, cols: usize, scale: f64, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

pub fn model(dims: &[usize], seed: u64) -> Mlp<f64> {
    Mlp::new(dims, 0.25, seed).unwrap()
}

pub fn snapshot(dims: &[usize], seed: u64) -> ModelSnapshot<f64> {
    ModelSnapshot::new(&model(dims, seed))
}

pub fn pool(rows: usize, cols: usize, seed: u64) -> PoolView<f64> {
    PoolView::new((0..rows).map(|i| 1000 + i).collect(), uniform(rows, cols, 1.0, seed)).unwrap()
}

pub fn blobs(classes: usize, per_class: usize, dim: usize, sigma: f64, seed: u64) -> Dataset<f64> {
    make_blobs(&BlobSpec {
        num_classes: classes,
        per_class_counts: vec![per_class; classes],
        dim,
        centers_seed: seed,
        noise_sigma: sigma,
        sample_seed: seed + 1,
    })
    .unwrap()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
