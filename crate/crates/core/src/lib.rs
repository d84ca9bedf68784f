//! Robust principal component analysis under adversarial corruption.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod certificate;
pub mod contamination;
pub mod error;
pub mod estimators;
pub mod filter;
pub mod linops;
pub mod oracle;
pub mod robust_pca;
pub mod stream;
pub mod streaming;
pub mod types;
pub mod vector;

pub use error::{Error, Result};
pub use contamination::{AdversaryKind, AdversarySpec, CovarianceSpec, Family, InlierSpec};
pub use oracle::{metric_approx_ratio, DenseMatrix};
pub use robust_pca::{robust_pca, PcaResult, PcaStatus};
pub use stream::SampleSource;
pub use streaming::{streaming_robust_pca, StreamOptions, StreamStats};
pub use types::{AlgoConfig, Dataset, ExecMode, FilterEntry, FilterStack, Label, WeightedDataset};
