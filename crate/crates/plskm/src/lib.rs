//! Simultaneous latent-variable path modeling and k-means row clustering.
//!
//! This crate estimates a partial least squares path model and a k-means
//! partition of the observations in one alternating least-squares problem,
//! instead of clustering scores after the fact. Heterogeneous data — think
//! customer segments with different satisfaction levels — then yields one
//! measurement model plus a partition that is chosen *because* it fits that
//! measurement model.
//!
//! The pieces:
//!
//! - [`model`]: describe a path model (latent variables, manifest blocks,
//!   directed paths), parse/serialize it, and validate it.
//! - [`data`]: column standardization with an audit trail.
//! - [`estimator`]: the alternating estimator, a fixed-partition variant, the
//!   unclustered variant, the two-step tandem baseline, and plain k-means.
//! - [`metrics`]: communalities, R², goodness of fit, reliability, and the
//!   adjusted Rand index.
//! - [`selection`]: choose the number of clusters (pseudo-F and gap) and
//!   classify restart landscapes.
//! - [`datagen`]: synthetic segmented data with known structure, for power
//!   studies and calibration.
//! - [`cli`]: the command-line front end (CSV in, JSON out).
//!
//! The `examples/` directory walks through each capability end to end.

pub mod cli;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimator;
mod linalg;
pub mod metrics;
pub mod model;
pub mod selection;

pub use data::DataMatrix;
pub use datagen::{generate_dataset, masked_dataset, SimConfig, SimDataset};
pub use error::{Error, Result};
pub use estimator::{FitOptions, FittedModel, Membership};
pub use metrics::{adjusted_rand_index, FitReport, ScoreBasis};
pub use model::{parse_model, parse_valid_model, PathModelSpec};
pub use selection::{select_k, SelectionOptions};
