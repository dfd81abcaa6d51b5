use std::fmt;

use serde::{Deserialize, Serialize};

use super::bound::stated_budget;
use crate::cumulant::{cumulant_at, LambdaGrid};
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::loss_data::{LossDataset, ModelMeta};
use crate::rate::{inverse_rate, rate, rate_curve, InverseRateEvaluation, DEFAULT_TOLERANCE};
use crate::SCHEMA_VERSION;

/// Absolute slack when testing `Ĵ_A ≤ Ĵ_B` pointwise.
pub const CUMULANT_SLACK: f64 = 1e-12;
/// Relative slack when testing `Î_A ≥ Î_B`.
const RATE_SLACK: f64 = 1e-9;
/// Points in the `(0, β]` grid used by [`interpolator_ordering`].
const BETA_GRID_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `Ĵ_A ≤ Ĵ_B` on the whole λ grid, which implies `Î_A ≥ Î_B` everywhere.
    Smoother,
    /// `Î_A ≥ Î_B` at every tested `a ≤ β`.
    BetaSmoother,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessVerdict {
    pub schema_version: u32,
    pub model_a: String,
    pub model_b: String,
    /// Requested β; `inf` when the whole a-grid was the target.
    pub beta: Extended,
    pub cumulant_dominance: bool,
    /// `max_λ (Ĵ_A − Ĵ_B)` over the grid.
    pub max_cumulant_excess: f64,
    /// Largest tested `a` such that `Î_A ≥ Î_B` at it and every smaller
    /// tested point; 0 when the first point already fails.
    pub rate_dominance_on: f64,
    pub verdict: Verdict,
    pub lambda_grid: LambdaGrid,
    pub a_values: Vec<f64>,
}

impl fmt::Display for SmoothnessVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Smoother => "smoother than",
            Verdict::BetaSmoother => "beta-smoother than",
            Verdict::Incomparable => "incomparable with",
        };
        write!(
            f,
            "{} is {verdict} {} (beta={}, cumulant_dominance={}, rate dominance up to a={}, {} lambdas, {} a-values)",
            self.model_a,
            self.model_b,
            self.beta,
            self.cumulant_dominance,
            self.rate_dominance_on,
            self.lambda_grid.len(),
            self.a_values.len()
        )
    }
}

fn rate_at_least(a: Extended, b: Extended) -> bool {
    match (a, b) {
        (Extended::Infinite, _) => true,
        (Extended::Finite(_), Extended::Infinite) => false,
        (Extended::Finite(x), Extended::Finite(y)) => x >= y - RATE_SLACK * y.max(1.0),
    }
}

/// Decides whether model A is smoother than model B from held-out losses.
///
/// Dominance of the cumulant over the whole λ grid is the sufficient check.
/// Failing that, rate dominance is checked on `a_values` up to `beta` (all of
/// them when `beta` is `None`). Both are certified only at grid resolution.
pub fn compare_smoothness(
    ds_a: &LossDataset,
    ds_b: &LossDataset,
    grid: &LambdaGrid,
    a_values: &[f64],
    beta: Option<f64>,
) -> Result<SmoothnessVerdict> {
    if let Some(b) = beta {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and positive, got {b}"
            )));
        }
    }
    let (pa, pb) = (ds_a.profile(), ds_b.profile());
    let mut max_excess = f64::NEG_INFINITY;
    for &lambda in grid.values() {
        max_excess = max_excess.max(cumulant_at(pa, lambda)? - cumulant_at(pb, lambda)?);
    }
    let cumulant_dominance = max_excess <= CUMULANT_SLACK;

    let rates_a = rate_curve(ds_a, a_values, DEFAULT_TOLERANCE)?;
    let rates_b = rate_curve(ds_b, a_values, DEFAULT_TOLERANCE)?;
    let first_failure = rates_a
        .iter()
        .zip(&rates_b)
        .position(|(ra, rb)| !rate_at_least(ra.value, rb.value));
    let rate_dominance_on = match first_failure {
        Some(0) => 0.0,
        Some(i) => a_values[i - 1],
        None => a_values.last().copied().unwrap_or(0.0),
    };
    let beta_holds = match beta {
        Some(b) => {
            a_values.first().is_some_and(|&a0| a0 <= b)
                && first_failure.is_none_or(|i| a_values[i] > b)
        }
        None => !a_values.is_empty() && first_failure.is_none(),
    };
    let verdict = if cumulant_dominance {
        Verdict::Smoother
    } else if beta_holds {
        Verdict::BetaSmoother
    } else {
        Verdict::Incomparable
    };
    Ok(SmoothnessVerdict {
        schema_version: SCHEMA_VERSION,
        model_a: ds_a.model_id().to_string(),
        model_b: ds_b.model_id().to_string(),
        beta: beta.map_or(Extended::Infinite, Extended::Finite),
        cumulant_dominance,
        max_cumulant_excess: max_excess,
        rate_dominance_on,
        verdict,
        lambda_grid: grid.clone(),
        a_values: a_values.to_vec(),
    })
}

/// Premise checks for "interpolator A generalizes no worse than B up to ε".
///
/// The population conclusion is never asserted; the report lists each
/// premise next to the held-out comparison so the claim can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatorReport {
    pub schema_version: u32,
    pub meta: ModelMeta,
    pub train_loss_a: f64,
    /// `train_loss_a ≤ ε`.
    pub premise_interpolator: bool,
    pub s: f64,
    /// `β = I⁻¹_A(s)`.
    pub beta: InverseRateEvaluation,
    /// `I_A(β)`, which should reach `s` whenever `I_A` is invertible there.
    pub rate_at_beta: Extended,
    pub rate_condition_holds: bool,
    /// Absent when `β = 0`, where the smoothness premise holds vacuously.
    pub smoothness: Option<SmoothnessVerdict>,
    pub premise_beta_smooth: bool,
    pub premises_hold: bool,
    pub claim: String,
    pub heldout_mean_a: f64,
    pub heldout_mean_b: f64,
    /// `heldout_mean_a ≤ heldout_mean_b + ε`.
    pub heldout_consistent: bool,
}

pub fn interpolator_ordering(
    train_loss_a: f64,
    heldout_a: &LossDataset,
    heldout_b: &LossDataset,
    meta: &ModelMeta,
) -> Result<InterpolatorReport> {
    meta.validate()?;
    if !(train_loss_a.is_finite() && train_loss_a >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "train loss must be finite and >= 0, got {train_loss_a}"
        )));
    }
    let s = stated_budget(meta);
    let beta = inverse_rate(heldout_a, s, DEFAULT_TOLERANCE)?;
    let (rate_at_beta, smoothness) = if beta.value > 0.0 {
        let r = rate(heldout_a, beta.value, DEFAULT_TOLERANCE)?.value;
        let a_grid: Vec<f64> = (1..=BETA_GRID_POINTS)
            .map(|i| beta.value * i as f64 / BETA_GRID_POINTS as f64)
            .collect();
        let verdict = compare_smoothness(
            heldout_a,
            heldout_b,
            &LambdaGrid::default(),
            &a_grid,
            Some(beta.value),
        )?;
        (r, Some(verdict))
    } else {
        (Extended::Infinite, None)
    };
    let rate_condition_holds = match rate_at_beta {
        Extended::Infinite => true,
        Extended::Finite(v) => v >= s - 1e-6 * s.max(1.0),
    };
    let premise_interpolator = train_loss_a <= meta.epsilon;
    let premise_beta_smooth = smoothness
        .as_ref()
        .is_none_or(|v| v.verdict != Verdict::Incomparable);
    let heldout_mean_a = heldout_a.summarize().empirical_loss;
    let heldout_mean_b = heldout_b.summarize().empirical_loss;
    Ok(InterpolatorReport {
        schema_version: SCHEMA_VERSION,
        meta: *meta,
        train_loss_a,
        premise_interpolator,
        s,
        beta,
        rate_at_beta,
        rate_condition_holds,
        smoothness,
        premise_beta_smooth,
        premises_hold: premise_interpolator && premise_beta_smooth,
        claim: format!(
            "L({}) <= L({}) + {}",
            heldout_a.model_id(),
            heldout_b.model_id(),
            meta.epsilon
        ),
        heldout_mean_a,
        heldout_mean_b,
        heldout_consistent: heldout_mean_a <= heldout_mean_b + meta.epsilon,
    })
}
