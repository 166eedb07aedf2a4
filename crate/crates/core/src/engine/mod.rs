//! Training and the annotation loop.

mod aggregate;
mod run;
mod train;

pub use aggregate::{aggregate_runs, MeanStd, RunAggregate, StepAggregate};
pub use run::{mistake_selection_rate, run_active_learning, LoopConfig, RetrainMode, RunRecord, StepRecord};
pub use train::{accuracy, train_to_convergence, Labeled, TrainConfig, TrainOutcome};
