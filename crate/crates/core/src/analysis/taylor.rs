//! Second-order approximations of the cumulant and rate functions around
//! λ = 0 and the gradient-norm bound on the inverse rate.

use serde::{Deserialize, Serialize};

use crate::cumulant::cumulant_at;
use crate::error::{Error, Result};
use crate::extended::f64_or_inf;
use crate::loss_data::LossDataset;
use crate::rate::{inverse_rate, rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxKind {
    /// `Ĵ(λ) ≈ λ²V̂/2`
    Cumulant,
    /// `I(a) ≈ a²/(2V̂)`
    Rate,
    /// `I⁻¹(s) ≈ √(2sV̂)`
    InverseRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Rate,
    InverseRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub kind: ApproxKind,
    /// λ, a or s depending on `kind`.
    pub at: f64,
    #[serde(with = "f64_or_inf")]
    pub exact: f64,
    pub approx: f64,
    #[serde(with = "f64_or_inf")]
    pub abs_error: f64,
}

impl ApproxReport {
    fn new(kind: ApproxKind, at: f64, exact: f64, approx: f64) -> Self {
        Self {
            kind,
            at,
            exact,
            approx,
            abs_error: (exact - approx).abs(),
        }
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error / self.exact.abs()
    }
}

pub fn variance_taylor(ds: &LossDataset, lambda: f64) -> Result<ApproxReport> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let exact = cumulant_at(ds.profile(), lambda)?;
    let approx = 0.5 * lambda * lambda * ds.summarize().variance;
    Ok(ApproxReport::new(
        ApproxKind::Cumulant,
        lambda,
        exact,
        approx,
    ))
}

/// Quadratic approximation of the rate (`x = a`) or inverse rate (`x = s`)
/// next to the solver value. A saturated rate shows up as `exact = inf`.
pub fn variance_rate_approx(
    ds: &LossDataset,
    mode: RateMode,
    x: f64,
    tol: f64,
) -> Result<ApproxReport> {
    let variance = ds.summarize().variance;
    match mode {
        RateMode::Rate => {
            if variance == 0.0 {
                return Err(Error::ZeroVariance);
            }
            let exact = rate(ds, x, tol)?.value.to_f64();
            Ok(ApproxReport::new(
                ApproxKind::Rate,
                x,
                exact,
                x * x / (2.0 * variance),
            ))
        }
        RateMode::InverseRate => {
            let exact = inverse_rate(ds, x, tol)?.value;
            let approx = (2.0 * x).sqrt() * variance.sqrt();
            Ok(ApproxReport::new(ApproxKind::InverseRate, x, exact, approx))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTaylorReport {
    pub lambda: f64,
    pub dimension: usize,
    /// `Δᵀ Cov(∇_θ ln p) Δ` with population normalisation.
    pub quadratic_form: f64,
    /// `λ² q / 2`.
    pub cumulant_approx: f64,
    pub s: Option<f64>,
    /// `√(2s) · √q`.
    pub inverse_rate_approx: Option<f64>,
}

/// Taylor approximation of the cumulant in parameter space around the
/// reference model at which `grad_theta` was recorded; `displacement` is
/// `θ − θ₀`.
///
/// `q` is computed as the variance of the projections `⟨∇_θ ln p_i, Δ⟩`,
/// which equals the quadratic form without building the d×d covariance.
pub fn covariance_taylor(
    ds: &LossDataset,
    displacement: &[f64],
    lambda: f64,
    s: Option<f64>,
) -> Result<CovarianceTaylorReport> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    if let Some(s) = s {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidS(s));
        }
    }
    let records = ds.records();
    let dimension = match &records[0].grad_theta {
        Some(g) => g.len(),
        None => return Err(Error::MissingGradients),
    };
    if dimension != displacement.len() {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            found: displacement.len(),
        });
    }
    let mut projections: Vec<f64> = records
        .iter()
        .map(|r| {
            let g = r
                .grad_theta
                .as_ref()
                .expect("validated: all records carry grad_theta");
            g.iter().zip(displacement).map(|(x, y)| x * y).sum()
        })
        .collect();
    projections.sort_by(f64::total_cmp);
    let m = projections.len() as f64;
    let mean = projections.iter().sum::<f64>() / m;
    let q = projections.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / m;
    Ok(CovarianceTaylorReport {
        lambda,
        dimension,
        quadratic_form: q,
        cumulant_approx: 0.5 * lambda * lambda * q,
        s,
        inverse_rate_approx: s.map(|s| (2.0 * s).sqrt() * q.sqrt()),
    })
}

/// Gradient-norm bounds `J(λ) ≤ Mλ²G` and `I⁻¹(s) ≤ √s·√(MG)` with
/// `G = mean |∇_x ln p|²` and a caller-assumed constant `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientNormBound {
    pub mean_grad_norm_sq: f64,
    pub m_const: f64,
    pub lambda: f64,
    pub cumulant_bound: f64,
    /// `Ĵ(λ)` for reference; the bound is not asserted against it.
    pub empirical_cumulant: f64,
    pub s: f64,
    pub inverse_rate_bound: f64,
    /// `inf_λ (s + Mλ²G)/λ = 2√(sMG)`, attained at `λ = √(s/(MG))`.
    pub inverse_rate_bound_at_optimum: f64,
    pub empirical_inverse_rate: f64,
}

pub fn gradient_norm_bound(
    ds: &LossDataset,
    m_const: f64,
    s: f64,
    lambda: f64,
) -> Result<GradientNormBound> {
    if !(m_const.is_finite() && m_const > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "M must be finite and positive, got {m_const}"
        )));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidS(s));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let mut norms = ds
        .records()
        .iter()
        .map(|r| r.grad_norm_sq.ok_or(Error::MissingGradNorms))
        .collect::<Result<Vec<f64>>>()?;
    norms.sort_by(f64::total_cmp);
    let g = norms.iter().sum::<f64>() / norms.len() as f64;
    let mg = m_const * g;
    Ok(GradientNormBound {
        mean_grad_norm_sq: g,
        m_const,
        lambda,
        cumulant_bound: mg * lambda * lambda,
        empirical_cumulant: cumulant_at(ds.profile(), lambda)?,
        s,
        inverse_rate_bound: s.sqrt() * mg.sqrt(),
        inverse_rate_bound_at_optimum: 2.0 * (s * mg).sqrt(),
        empirical_inverse_rate: inverse_rate(ds, s, crate::rate::DEFAULT_TOLERANCE)?.value,
    })
}
