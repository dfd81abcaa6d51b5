//! Empirical cumulant generating function of the centred negative loss,
//!
//! ```text
//! Ĵ(λ) = ln( (1/M) Σ exp(−λ ℓ_i) ) + λ L̂
//! ```
//!
//! and its λ-derivative `L̂ − Ẽ_λ[ℓ]`, where `Ẽ_λ` averages under weights
//! proportional to `exp(−λ ℓ_i)`.
//!
//! All sums run over excesses `d_i = ℓ_i − m̂ ≥ 0`, so `exp(−λ d_i) ≤ 1` and
//! nothing overflows for any λ. For `λ·(L̂ − m̂) ≤ 1` the sum is taken around
//! the mean instead of the minimum, via `ln_1p`/`exp_m1`, which keeps relative
//! precision as `Ĵ(λ) → 0`.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_data::{DatasetSummary, LossDataset, LossProfile};

/// Round-off below this magnitude is clamped to zero; anything more negative
/// is a bug.
pub(crate) const NEGATIVE_ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
    /// Caller-supplied points with no regular structure.
    Irregular,
}

/// Strictly increasing, positive evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    spacing: Spacing,
}

impl LambdaGrid {
    pub const DEFAULT_POINTS: usize = 64;
    pub const DEFAULT_RANGE: (f64, f64) = (1e-3, 1e3);

    pub fn linear(start: f64, stop: f64, count: usize) -> Result<Self> {
        Self::check_range(start, stop, count)?;
        let values = if count == 1 {
            vec![start]
        } else {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        stop
                    } else {
                        start + step * i as f64
                    }
                })
                .collect()
        };
        Self::build(values, Spacing::Linear)
    }

    pub fn log(start: f64, stop: f64, count: usize) -> Result<Self> {
        Self::check_range(start, stop, count)?;
        let values = if count == 1 {
            vec![start]
        } else {
            let (lo, hi) = (start.ln(), stop.ln());
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| match i {
                    0 => start,
                    _ if i + 1 == count => stop,
                    _ => (lo + step * i as f64).exp(),
                })
                .collect()
        };
        Self::build(values, Spacing::Log)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::build(values, Spacing::Irregular)
    }

    fn check_range(start: f64, stop: f64, count: usize) -> Result<()> {
        if count == 0 {
            return Err(Error::InvalidGrid("count must be >= 1".into()));
        }
        if !(start.is_finite() && stop.is_finite() && start > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite and positive, got {start}..{stop}"
            )));
        }
        if count > 1 && stop <= start {
            return Err(Error::InvalidGrid(format!(
                "stop {stop} must exceed start {start}"
            )));
        }
        Ok(())
    }

    fn build(values: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "value {v} is not finite and positive"
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "values must be strictly increasing".into(),
            ));
        }
        Ok(Self { values, spacing })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        let (lo, hi) = Self::DEFAULT_RANGE;
        Self::log(lo, hi, Self::DEFAULT_POINTS).expect("default grid is valid")
    }
}

/// Parses `start:stop:count:linear|log`.
impl FromStr for LambdaGrid {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let bad = |why: &str| Error::InvalidGrid(format!("{spec:?}: {why}"));
        if parts.len() != 4 {
            return Err(bad("expected start:stop:count:linear|log"));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| bad("start is not a number"))?;
        let stop: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| bad("stop is not a number"))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad("count is not an integer"))?;
        match parts[3].trim() {
            "linear" | "lin" => Self::linear(start, stop, count),
            "log" => Self::log(start, stop, count),
            _ => Err(bad("spacing must be linear or log")),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `ln( (1/M) Σ exp(−λ (d_i − shift)) )`; callers keep `λ·shift` small.
fn ln_mean_exp(excess: &[f64], lambda: f64, shift: f64) -> f64 {
    let total: f64 = excess
        .iter()
        .map(|d| (-lambda * (d - shift)).exp_m1())
        .sum();
    (total / excess.len() as f64).ln_1p()
}

fn small_lambda(profile: &LossProfile, lambda: f64) -> bool {
    lambda * profile.gap <= 1.0
}

fn clamp_roundoff(value: f64, what: &str, lambda: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value > -NEGATIVE_ROUNDOFF {
        Ok(0.0)
    } else {
        Err(Error::Internal(format!("{what}({lambda}) = {value} < 0")))
    }
}

pub(crate) fn cumulant_at(profile: &LossProfile, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || profile.max_excess == 0.0 {
        return Ok(0.0);
    }
    let raw = if small_lambda(profile, lambda) {
        ln_mean_exp(&profile.excess, lambda, profile.gap)
    } else {
        lambda * profile.gap + ln_mean_exp(&profile.excess, lambda, 0.0)
    };
    clamp_roundoff(raw, "J", lambda)
}

/// Mean excess under weights `exp(−λ d_i)`.
fn tilted_excess(profile: &LossProfile, lambda: f64) -> f64 {
    let (mut w_sum, mut wd_sum) = (0.0, 0.0);
    for &d in &profile.excess {
        let w = (-lambda * d).exp();
        w_sum += w;
        wd_sum += w * d;
    }
    wd_sum / w_sum
}

pub(crate) fn derivative_at(profile: &LossProfile, lambda: f64) -> f64 {
    if lambda == 0.0 || profile.max_excess == 0.0 {
        return 0.0;
    }
    let (mut w_sum, mut num) = (0.0, 0.0);
    for &d in &profile.excess {
        let w = (-lambda * d).exp();
        w_sum += w;
        num += w * (profile.gap - d);
    }
    (num / w_sum).clamp(0.0, profile.gap)
}

/// Bregman function `λ J'(λ) − J(λ)`, non-decreasing from 0 towards `−ln(k/M)`.
pub(crate) fn bregman_at(profile: &LossProfile, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || profile.max_excess == 0.0 {
        return Ok(0.0);
    }
    let raw = if small_lambda(profile, lambda) {
        lambda * derivative_at(profile, lambda) - cumulant_at(profile, lambda)?
    } else {
        // −ln mean w − λ Ẽ[d]; no λ·gap terms to cancel at large λ
        -ln_mean_exp(&profile.excess, lambda, 0.0) - lambda * tilted_excess(profile, lambda)
    };
    Ok(raw.max(0.0))
}

/// `Ĵ(λ)` for one λ. `λ = 0` returns exactly 0.
pub fn estimate_cumulant(ds: &LossDataset, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    cumulant_at(ds.profile(), lambda)
}

/// `∂Ĵ/∂λ`, always within `[0, L̂ − m̂]`.
pub fn cumulant_derivative(ds: &LossDataset, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(derivative_at(ds.profile(), lambda))
}

/// `Ĵ` and `∂Ĵ/∂λ` tabulated over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantCurve {
    pub grid: LambdaGrid,
    pub j_values: Vec<f64>,
    pub j_derivs: Vec<f64>,
    pub summary: DatasetSummary,
}

pub fn cumulant_curve(ds: &LossDataset, grid: &LambdaGrid) -> Result<CumulantCurve> {
    let profile = ds.profile();
    let points: Vec<(f64, f64)> = grid
        .values()
        .par_iter()
        .map(|&lambda| {
            Ok((
                cumulant_at(profile, lambda)?,
                derivative_at(profile, lambda),
            ))
        })
        .collect::<Result<_>>()?;
    let (j_values, j_derivs) = points.into_iter().unzip();
    Ok(CumulantCurve {
        grid: grid.clone(),
        j_values,
        j_derivs,
        summary: ds.summarize(),
    })
}
