//! Estimation of the cumulant generating function, rate function and
//! inverse rate function of a model's loss distribution from per-sample
//! losses, and the generalization, smoothness and augmentation analyses
//! built on them.
//!
//! The usual entry point is a [`LossDataset`] of held-out losses:
//!
//! ```
//! use lossrate_core::{estimate_cumulant, inverse_rate, LossDataset, DEFAULT_TOLERANCE};
//!
//! let ds = LossDataset::from_losses("model", &[0.1, 0.4, 0.2, 1.3]).unwrap();
//! let j = estimate_cumulant(&ds, 1.0).unwrap();
//! let gap = inverse_rate(&ds, 0.05, DEFAULT_TOLERANCE).unwrap();
//! assert!(j > 0.0 && gap.value < ds.summarize().empirical_loss);
//! ```

pub mod analysis;
pub mod cumulant;
pub mod error;
pub mod extended;
pub mod loss_data;
pub mod oracle;
pub mod rate;

/// Version tag written into every serialized report.
pub const SCHEMA_VERSION: u32 = 1;

pub use cumulant::{
    cumulant_curve, cumulant_derivative, estimate_cumulant, CumulantCurve, LambdaGrid, Spacing,
};
pub use error::{Error, Result};
pub use extended::Extended;
pub use loss_data::{
    load_dataset, save_dataset, DataFormat, DatasetSummary, LossDataset, LossRecord, ModelMeta,
    Reduction, TIE_TOLERANCE,
};
pub use oracle::{CramerReport, DiscreteLossDistribution};
pub use rate::{
    grid_inverse_rate, inverse_rate, inverse_rate_curve, rate, rate_curve, InverseRateEvaluation,
    RateEvaluation, DEFAULT_TOLERANCE,
};
