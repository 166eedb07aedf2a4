//! Datasets, protocol splits and the annotation oracle.

mod dataset;
pub mod idx;
mod split;

pub use dataset::{make_blobs, BlobSpec, Dataset};
pub use idx::load_idx;
pub use split::{
    make_imbalanced_split, make_split, oracle_annotate, ImbalanceSpec, MinorityChoice, Split, SplitSpec, TestSet,
};

use crate::scalar::Real;

/// Loads a CSV file whose last column is the integer label.
pub fn load_csv<T: Real>(path: impl AsRef<std::path::Path>, has_header: bool) -> crate::Result<Dataset<T>> {
    Dataset::from_csv(path, has_header)
}
