use serde::{Deserialize, Serialize};

use crate::engine::StepRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when `n == 1`.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }

    /// True when the deviation comes from a single sample and is 0 only by
    /// convention.
    pub fn std_is_placeholder(&self) -> bool {
        self.n < 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAggregate {
    pub step: usize,
    pub train_size: f64,
    pub test_accuracy: MeanStd,
    pub mistake_rate: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub steps: Vec<StepAggregate>,
    /// Runs had different lengths; only the common prefix is aggregated.
    pub truncated_to_common_prefix: bool,
}

/// Per-step mean and standard deviation across runs, aligned by step
/// index. The result does not depend on the order of `runs`.
pub fn aggregate_runs(runs: &[Vec<StepRecord>]) -> RunAggregate {
    let common = runs.iter().map(Vec::len).min().unwrap_or(0);
    let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
    if common != longest {
        log::warn!("runs have between {common} and {longest} steps; aggregating the first {common}");
    }
    // Sorting the per-step samples makes the floating point sums independent
    // of run order.
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v
    };
    let steps = (0..common)
        .map(|s| {
            let acc = sorted(runs.iter().map(|r| r[s].test_accuracy).collect());
            let mistakes = sorted(runs.iter().filter_map(|r| r[s].mistake_selection_rate).collect());
            let sizes = sorted(runs.iter().map(|r| r[s].train_size as f64).collect());
            StepAggregate {
                step: runs[0][s].step,
                train_size: sizes.iter().sum::<f64>() / sizes.len() as f64,
                test_accuracy: MeanStd::of(&acc).expect("at least one run"),
                mistake_rate: MeanStd::of(&mistakes),
            }
        })
        .collect();
    RunAggregate {
        runs: runs.len(),
        steps,
        truncated_to_common_prefix: common != longest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(step: usize, acc: f64, mistake: Option<f64>) -> StepRecord {
        StepRecord {
            step,
            train_size: 10 + step,
            test_accuracy: acc,
            holdout_loss: 0.0,
            mistake_selection_rate: mistake,
            selected_indices: vec![],
            epochs: 1,
            wall_time_ms: 0,
        }
    }

    #[test]
    fn single_run_has_flagged_zero_std() {
        let agg = aggregate_runs(&[vec![step(0, 0.5, None)]]);
        let a = agg.steps[0].test_accuracy;
        assert_eq!((a.mean, a.std), (0.5, 0.0));
        assert!(a.std_is_placeholder());
        assert!(agg.steps[0].mistake_rate.is_none());
    }

    #[test]
    fn two_runs_mean_and_sample_std() {
        let agg = aggregate_runs(&[vec![step(0, 0.4, Some(1.0))], vec![step(0, 0.6, Some(0.5))]]);
        let a = agg.steps[0].test_accuracy;
        assert!((a.mean - 0.5).abs() < 1e-15);
        assert!((a.std - 0.1414).abs() < 1e-4);
        assert!((agg.steps[0].mistake_rate.unwrap().mean - 0.75).abs() < 1e-15);
    }

    #[test]
    fn order_invariant_and_common_prefix() {
        let r1 = vec![step(0, 0.1, None), step(1, 0.3, Some(0.2))];
        let r2 = vec![step(0, 0.7, None)];
        let r3 = vec![step(0, 0.2, None), step(1, 0.9, Some(0.4))];
        let a = aggregate_runs(&[r1.clone(), r2.clone(), r3.clone()]);
        let b = aggregate_runs(&[r3, r1, r2]);
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 1);
        assert!(a.truncated_to_common_prefix);
    }
}
