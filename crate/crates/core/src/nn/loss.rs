//! Softmax, cross-entropy and the related scalar helpers.

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Real;

/// Output of [`softmax_xent`].
#[derive(Debug, Clone)]
pub struct XentOutput<T> {
    pub mean_loss: T,
    pub per_sample: Vec<T>,
    pub probs: Matrix<T>,
}

#[inline]
pub fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = z.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Softmax of one row, written into `out`.
#[inline]
pub fn softmax_into<T: Real>(z: &[T], out: &mut [T]) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

pub fn softmax<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_into(logits.row(i), out.row_mut(i));
    }
    out
}

/// Cross-entropy `-log softmax(z)[label]` for a single row.
#[inline]
pub fn xent_row<T: Real>(z: &[T], label: usize) -> T {
    log_sum_exp(z) - z[label]
}

pub(crate) fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dim("labels", rows, labels.len()));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::Label {
            row,
            label,
            num_classes,
        });
    }
    Ok(())
}

/// Log-sum-exp stabilised softmax cross-entropy over a batch.
pub fn softmax_xent<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<XentOutput<T>> {
    check_labels(labels, logits.rows(), logits.cols())?;
    let per_sample: Vec<T> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| xent_row(logits.row(i), y))
        .collect();
    let mean_loss = if per_sample.is_empty() {
        T::zero()
    } else {
        per_sample.iter().copied().sum::<T>() / T::from_usize_exact(per_sample.len())
    };
    Ok(XentOutput {
        mean_loss,
        per_sample,
        probs: softmax(logits),
    })
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
#[inline]
pub fn entropy<T: Real>(p: &[T]) -> T {
    p.iter()
        .filter(|&&x| x > T::zero())
        .map(|&x| -x * x.ln())
        .sum()
}

/// Entropy of `softmax(z)` computed from logits without forming `log p`
/// from rounded probabilities.
#[inline]
pub fn entropy_from_logits<T: Real>(z: &[T]) -> T {
    let lse = log_sum_exp(z);
    z.iter()
        .map(|&x| {
            let lp = x - lse;
            let p = lp.exp();
            if p > T::zero() {
                -p * lp
            } else {
                T::zero()
            }
        })
        .sum()
}

#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Gradient of the binary cross-entropy of a linear logit `z = theta . phi`
/// with respect to `theta`: `(sigmoid(z) - y) * phi`.
///
/// `y` may be any real in `[0, 1]`.
pub fn binary_logistic_grad<T: Real>(z: T, y: T, phi: &[T]) -> Vec<T> {
    let r = sigmoid(z) - y;
    phi.iter().map(|&p| r * p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let z = Matrix::<f64>::zeros(3, 10);
        let out = softmax_xent(&z, &[0, 4, 9]).unwrap();
        for l in &out.per_sample {
            assert!((l - 10f64.ln()).abs() < 1e-12);
        }
        assert!((out.mean_loss - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn saturated_prediction_has_negligible_loss() {
        let z = Matrix::<f64>::from_vec(1, 3, vec![50.0, 0.0, 0.0]).unwrap();
        let out = softmax_xent(&z, &[0]).unwrap();
        assert!(out.per_sample[0] < 1e-15);
        assert!(out.per_sample[0] >= 0.0);
    }

    #[test]
    fn scalar_evaluation_matches() {
        let z = Matrix::<f64>::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let out = softmax_xent(&z, &[2]).unwrap();
        let want = (1.0 + (-1f64).exp() + (-2f64).exp()).ln();
        assert!((out.per_sample[0] - want).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let z = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            softmax_xent(&z, &[0, 3]),
            Err(Error::Label { row: 1, label: 3, .. })
        ));
    }

    #[test]
    fn huge_logits_stay_finite() {
        let z = Matrix::<f64>::from_vec(1, 2, vec![1e4, -1e4]).unwrap();
        let out = softmax_xent(&z, &[1]).unwrap();
        assert!(out.per_sample[0].is_finite());
        assert!(out.probs.is_finite());
    }

    #[test]
    fn entropy_edges() {
        assert_eq!(entropy(&[1.0f64, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.25f64; 4]) - 4f64.ln()).abs() < 1e-15);
        assert!((entropy_from_logits(&[0.0f64; 10]) - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn binary_grad_cases() {
        let phi = [1.0f64, -2.0, 0.5];
        assert_eq!(binary_logistic_grad(0.0, 1.0, &phi), vec![-0.5, 1.0, -0.25]);
        let z = 0.7f64;
        let g = binary_logistic_grad(z, sigmoid(z), &phi);
        assert!(g.iter().all(|&x| x == 0.0));
    }
}
