//! Bounds and comparisons built on the cumulant and rate estimates.

mod augmentation;
mod bound;
mod smoothness;
mod taylor;

pub use augmentation::{
    chained_da_check, da_inequality_check, ChainedDaReport, ChainedPoint, DaCheckReport, DaPoint,
    JENSEN_SLACK,
};
pub use bound::{generalization_bound, stated_budget, union_budget, BoundReport, BudgetForm};
pub use smoothness::{
    compare_smoothness, interpolator_ordering, InterpolatorReport, SmoothnessVerdict, Verdict,
    CUMULANT_SLACK,
};
pub use taylor::{
    covariance_taylor, gradient_norm_bound, variance_rate_approx, variance_taylor, ApproxKind,
    ApproxReport, CovarianceTaylorReport, GradientNormBound, RateMode,
};
