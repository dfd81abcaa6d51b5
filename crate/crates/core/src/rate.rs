//! Rate function `I(a) = sup_λ λa − Ĵ(λ)` and inverse rate
//! `I⁻¹(s) = inf_λ (Ĵ(λ) + s)/λ` of an empirical loss sample.
//!
//! Both optima are found by bisection on a monotone function of λ: the
//! derivative `Ĵ'` for the rate and the Bregman function `λĴ' − Ĵ` for the
//! inverse. Requests outside the empirical domain are detected up front and
//! reported as saturated instead of being chased towards λ = ∞.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{bregman_at, cumulant_at, derivative_at, LambdaGrid};
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::loss_data::{LossDataset, LossProfile};

/// Relative residual at which bisection stops early.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Largest λ the bracket search may reach.
pub const LAMBDA_CAP: f64 = 1e9;

const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEvaluation {
    pub a: f64,
    pub value: Extended,
    pub lambda_star: Extended,
    /// `a ≥ L̂ − m̂`: the deviation lies outside the empirical domain.
    pub saturated: bool,
    /// Finite empirical rate at the domain boundary, `−ln(k/M)`.
    pub b_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseRateEvaluation {
    pub s: f64,
    pub value: f64,
    pub lambda_star: Extended,
    /// `s ≥ −ln(k/M)`; the value is then `L̂ − m̂`.
    pub saturated: bool,
    pub b_max: f64,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}

/// Smallest λ with `f(λ) ≈ target` for a non-decreasing `f` with `f(0) = 0`.
///
/// Doubles an upper bracket from 1 until `f ≥ target`, then bisects. When
/// `f(LAMBDA_CAP)` is still below the target the root lies past the cap and
/// the cap itself is returned; this happens when the smallest non-zero
/// excess is tiny and `f` creeps towards its supremum.
fn solve_increasing<F>(f: F, target: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        if f(hi)? >= target {
            break;
        }
        if hi >= LAMBDA_CAP {
            return Ok(LAMBDA_CAP);
        }
        lo = hi;
        hi = (hi * 2.0).min(LAMBDA_CAP);
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if (v - target).abs() <= tol * target {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub(crate) fn rate_profile(
    profile: &LossProfile,
    b_max: f64,
    a: f64,
    tol: f64,
) -> Result<RateEvaluation> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidA(a));
    }
    check_tol(tol)?;
    if a >= profile.gap - tol {
        return Ok(RateEvaluation {
            a,
            value: Extended::Infinite,
            lambda_star: Extended::Infinite,
            saturated: true,
            b_max,
        });
    }
    let lambda = solve_increasing(|l| Ok(derivative_at(profile, l)), a, tol)?;
    let value = (lambda * a - cumulant_at(profile, lambda)?).max(0.0);
    Ok(RateEvaluation {
        a,
        value: Extended::Finite(value),
        lambda_star: Extended::Finite(lambda),
        saturated: false,
        b_max,
    })
}

pub(crate) fn inverse_rate_profile(
    profile: &LossProfile,
    b_max: f64,
    s: f64,
    tol: f64,
) -> Result<InverseRateEvaluation> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidS(s));
    }
    check_tol(tol)?;
    if s >= b_max - tol {
        return Ok(InverseRateEvaluation {
            s,
            value: profile.gap,
            lambda_star: Extended::Infinite,
            saturated: true,
            b_max,
        });
    }
    let lambda = solve_increasing(|l| bregman_at(profile, l), s, tol)?;
    let value = ((cumulant_at(profile, lambda)? + s) / lambda).min(profile.gap);
    Ok(InverseRateEvaluation {
        s,
        value,
        lambda_star: Extended::Finite(lambda),
        saturated: false,
        b_max,
    })
}

/// `I(a)` by bisection on `Ĵ'(λ) = a`; `+∞` when `a ≥ L̂ − m̂ − tol`.
pub fn rate(ds: &LossDataset, a: f64, tol: f64) -> Result<RateEvaluation> {
    rate_profile(ds.profile(), ds.summarize().bregman_max(), a, tol)
}

/// `I⁻¹(s)` by bisection on `λĴ'(λ) − Ĵ(λ) = s`; saturates at `L̂ − m̂`
/// once `s` reaches `−ln(k/M)`.
pub fn inverse_rate(ds: &LossDataset, s: f64, tol: f64) -> Result<InverseRateEvaluation> {
    inverse_rate_profile(ds.profile(), ds.summarize().bregman_max(), s, tol)
}

/// Inverse rate with the infimum restricted to a finite λ grid.
/// Ties resolve to the smallest λ.
pub fn grid_inverse_rate(
    ds: &LossDataset,
    s: f64,
    grid: &LambdaGrid,
) -> Result<InverseRateEvaluation> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidS(s));
    }
    let profile = ds.profile();
    let mut best = (f64::INFINITY, 0.0);
    for &lambda in grid.values() {
        let v = (cumulant_at(profile, lambda)? + s) / lambda;
        if v < best.0 {
            best = (v, lambda);
        }
    }
    Ok(InverseRateEvaluation {
        s,
        value: best.0,
        lambda_star: Extended::Finite(best.1),
        saturated: false,
        b_max: ds.summarize().bregman_max(),
    })
}

fn check_increasing(xs: &[f64], name: &str) -> Result<()> {
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{name} values must be strictly increasing"
        )));
    }
    Ok(())
}

pub fn rate_curve(ds: &LossDataset, a_values: &[f64], tol: f64) -> Result<Vec<RateEvaluation>> {
    check_increasing(a_values, "a")?;
    let b_max = ds.summarize().bregman_max();
    let profile = ds.profile();
    a_values
        .par_iter()
        .map(|&a| rate_profile(profile, b_max, a, tol))
        .collect()
}

pub fn inverse_rate_curve(
    ds: &LossDataset,
    s_values: &[f64],
    tol: f64,
) -> Result<Vec<InverseRateEvaluation>> {
    check_increasing(s_values, "s")?;
    let b_max = ds.summarize().bregman_max();
    let profile = ds.profile();
    s_values
        .par_iter()
        .map(|&s| inverse_rate_profile(profile, b_max, s, tol))
        .collect()
}
