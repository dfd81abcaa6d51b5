use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_data::{LossDataset, ModelMeta};
use crate::rate::{inverse_rate, InverseRateEvaluation, DEFAULT_TOLERANCE};
use crate::SCHEMA_VERSION;

/// Which complexity budget `s` feeds the inverse rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetForm {
    /// `(p/n)·ln(2/δ)`.
    #[default]
    Stated,
    /// `(p·ln 2 + ln(1/δ))/n`, what a union bound over `2^p` models gives.
    UnionBound,
}

pub fn stated_budget(meta: &ModelMeta) -> f64 {
    meta.param_count as f64 / meta.train_size as f64 * (2.0 / meta.delta).ln()
}

pub fn union_budget(meta: &ModelMeta) -> f64 {
    (meta.param_count as f64 * std::f64::consts::LN_2 - meta.delta.ln()) / meta.train_size as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub model_id: String,
    pub meta: ModelMeta,
    /// Training loss the bound is added to.
    pub empirical_loss: f64,
    /// Set when no training loss was supplied and the held-out mean stands in.
    pub train_loss_from_heldout: bool,
    pub heldout_loss: f64,
    pub budget_form: BudgetForm,
    pub s: f64,
    pub s_stated: f64,
    pub s_union: f64,
    pub inverse_rate: InverseRateEvaluation,
    /// `empirical_loss + I⁻¹(s)`.
    pub upper_bound: f64,
}

/// Bounds the expected loss by a training loss plus `I⁻¹(s)` estimated on
/// the held-out dataset `ds`.
pub fn generalization_bound(
    ds: &LossDataset,
    meta: &ModelMeta,
    train_loss: Option<f64>,
    form: BudgetForm,
) -> Result<BoundReport> {
    meta.validate()?;
    if let Some(t) = train_loss {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "train loss must be finite and >= 0, got {t}"
            )));
        }
    }
    let heldout_loss = ds.summarize().empirical_loss;
    let s_stated = stated_budget(meta);
    let s_union = union_budget(meta);
    let s = match form {
        BudgetForm::Stated => s_stated,
        BudgetForm::UnionBound => s_union,
    };
    let inv = inverse_rate(ds, s, DEFAULT_TOLERANCE)?;
    let empirical_loss = train_loss.unwrap_or(heldout_loss);
    Ok(BoundReport {
        schema_version: SCHEMA_VERSION,
        model_id: ds.model_id().to_string(),
        meta: *meta,
        empirical_loss,
        train_loss_from_heldout: train_loss.is_none(),
        heldout_loss,
        budget_form: form,
        s,
        s_stated,
        s_union,
        inverse_rate: inv,
        upper_bound: empirical_loss + inv.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_arithmetic() {
        let meta = ModelMeta::new(10, 1000, 0.05, 0.0).unwrap();
        let s = stated_budget(&meta);
        assert!((s - 0.01 * 40f64.ln()).abs() < 1e-15);
        assert!((s - 0.036_889).abs() < 1e-6);
        let u = union_budget(&meta);
        assert!((u - (10.0 * 2f64.ln() + 20f64.ln()) / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn constant_loss_bound_is_the_loss() {
        let ds = LossDataset::from_losses("c", &[0.7; 5]).unwrap();
        let meta = ModelMeta::new(3, 10, 0.1, 0.0).unwrap();
        let r = generalization_bound(&ds, &meta, None, BudgetForm::Stated).unwrap();
        assert_eq!(r.upper_bound, 0.7);
        assert!(r.train_loss_from_heldout);
    }

    #[test]
    fn saturated_budget_caps_at_twice_loss() {
        let ds = LossDataset::from_losses("m", &[0.0, 1.0, 2.0]).unwrap();
        // s = 1000 · ln 40 ≫ ln 3
        let meta = ModelMeta::new(1000, 1, 0.05, 0.0).unwrap();
        let r = generalization_bound(&ds, &meta, None, BudgetForm::Stated).unwrap();
        assert!(r.inverse_rate.saturated);
        let s = ds.summarize();
        assert_eq!(r.upper_bound, s.empirical_loss + s.loss_gap());
        assert!(r.upper_bound <= 2.0 * s.empirical_loss);
    }

    #[test]
    fn supplied_train_loss_is_used() {
        let ds = LossDataset::from_losses("m", &[0.0, 1.0]).unwrap();
        let meta = ModelMeta::new(10, 1000, 0.05, 0.0).unwrap();
        let r = generalization_bound(&ds, &meta, Some(0.01), BudgetForm::UnionBound).unwrap();
        assert!(!r.train_loss_from_heldout);
        assert_eq!(r.s, r.s_union);
        assert_eq!(r.upper_bound, 0.01 + r.inverse_rate.value);
        assert!(generalization_bound(&ds, &meta, Some(-1.0), BudgetForm::Stated).is_err());
        let bad = ModelMeta { delta: 2.0, ..meta };
        assert!(matches!(
            generalization_bound(&ds, &bad, None, BudgetForm::Stated),
            Err(Error::InvalidMeta(_))
        ));
    }
}
