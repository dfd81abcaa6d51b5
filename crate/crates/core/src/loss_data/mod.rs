//! Per-sample loss data: validation, summary statistics and the
//! group-mean reduction used for data augmentation.
//!
//! Every estimate downstream depends only on the multiset of loss values.
//! [`LossDataset`] caches the losses as sorted excesses over the minimum so
//! that sums are taken in a canonical order and results are bitwise
//! independent of record order.

mod load;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_dataset, save_dataset, DataFormat};

/// Losses within this absolute distance of the minimum count as attaining it.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// One evaluated sample. Losses are negative log-likelihoods in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub sample_id: String,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    /// Squared norm of the input gradient of the log-likelihood.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_sq: Option<f64>,
    /// Parameter gradient of the log-likelihood at a reference model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_theta: Option<Vec<f64>>,
}

impl LossRecord {
    pub fn new(sample_id: impl Into<String>, loss: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            loss,
            group_id: None,
            grad_norm_sq: None,
            grad_theta: None,
        }
    }

    pub fn with_group(mut self, group_id: impl Into<String>) -> Self {
        self.group_id = Some(group_id.into());
        self
    }

    pub fn with_grad_norm_sq(mut self, value: f64) -> Self {
        self.grad_norm_sq = Some(value);
        self
    }

    pub fn with_grad_theta(mut self, grad: Vec<f64>) -> Self {
        self.grad_theta = Some(grad);
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.loss.is_finite() {
            return Err(format!("loss of {:?} is not finite", self.sample_id));
        }
        if self.loss < 0.0 {
            return Err(format!(
                "loss of {:?} is negative ({}); log-losses must be >= 0",
                self.sample_id, self.loss
            ));
        }
        if let Some(g) = self.grad_norm_sq {
            if !g.is_finite() || g < 0.0 {
                return Err(format!(
                    "grad_norm_sq of {:?} must be finite and >= 0, got {g}",
                    self.sample_id
                ));
            }
        }
        if let Some(grad) = &self.grad_theta {
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(format!(
                    "grad_theta of {:?} has non-finite entries",
                    self.sample_id
                ));
            }
        }
        Ok(())
    }
}

/// Plug-in statistics of a loss sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub count: usize,
    /// Mean loss.
    pub empirical_loss: f64,
    /// Smallest loss, the empirical essential infimum.
    pub min_loss: f64,
    pub min_loss_count: usize,
    /// Population variance (divides by `count`).
    pub variance: f64,
}

impl DatasetSummary {
    /// `L̂ − m̂`: the supremum of the cumulant derivative and the largest
    /// deviation with a finite rate.
    pub fn loss_gap(&self) -> f64 {
        self.empirical_loss - self.min_loss
    }

    /// Supremum of the Bregman function `λJ'(λ) − J(λ)`, `−ln(k/M)` where
    /// `k` samples attain the minimum.
    pub fn bregman_max(&self) -> f64 {
        (self.count as f64 / self.min_loss_count as f64).ln()
    }
}

/// Loss values in canonical form: sorted excesses over the minimum.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LossProfile {
    pub excess: Vec<f64>,
    pub min_loss: f64,
    /// Mean excess, `L̂ − m̂`.
    pub gap: f64,
    pub max_excess: f64,
    pub min_count: usize,
    pub variance: f64,
}

impl LossProfile {
    pub(crate) fn from_losses(losses: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut losses: Vec<f64> = losses.into_iter().collect();
        if losses.is_empty() {
            return Err(Error::EmptyDataset);
        }
        losses.sort_by(f64::total_cmp);
        let min_loss = losses[0];
        let excess: Vec<f64> = losses.iter().map(|l| l - min_loss).collect();
        let m = excess.len() as f64;
        let mean_excess = excess.iter().sum::<f64>() / m;
        // representable gap, so that summary().loss_gap() reproduces it exactly
        let gap = (min_loss + mean_excess) - min_loss;
        let max_excess = *excess.last().unwrap();
        let min_count = excess.iter().take_while(|&&d| d <= TIE_TOLERANCE).count();
        let variance = if max_excess <= TIE_TOLERANCE {
            0.0
        } else {
            excess.iter().map(|d| (d - gap) * (d - gap)).sum::<f64>() / m
        };
        Ok(Self {
            excess,
            min_loss,
            gap,
            max_excess,
            min_count,
            variance,
        })
    }

    pub(crate) fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            count: self.excess.len(),
            empirical_loss: self.min_loss + self.gap,
            min_loss: self.min_loss,
            min_loss_count: self.min_count,
            variance: self.variance,
        }
    }
}

/// A validated, non-empty collection of loss records for one model.
#[derive(Debug, Clone)]
pub struct LossDataset {
    model_id: String,
    records: Vec<LossRecord>,
    profile: LossProfile,
}

impl PartialEq for LossDataset {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id && self.records == other.records
    }
}

impl LossDataset {
    pub fn new(model_id: impl Into<String>, records: Vec<LossRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for record in &records {
            record.validate().map_err(Error::InvalidRecord)?;
        }
        let with_grad = records.iter().filter(|r| r.grad_theta.is_some()).count();
        if with_grad > 0 {
            if with_grad != records.len() {
                return Err(Error::InvalidRecord(format!(
                    "{with_grad} of {} records carry grad_theta; all or none must",
                    records.len()
                )));
            }
            let dim = records[0].grad_theta.as_ref().map_or(0, Vec::len);
            if let Some(bad) = records
                .iter()
                .find(|r| r.grad_theta.as_ref().map_or(0, Vec::len) != dim)
            {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: bad.grad_theta.as_ref().map_or(0, Vec::len),
                });
            }
        }
        let profile = LossProfile::from_losses(records.iter().map(|r| r.loss))?;
        Ok(Self {
            model_id: model_id.into(),
            records,
            profile,
        })
    }

    /// Builds a dataset of bare losses with ids `s1`, `s2`, ...
    pub fn from_losses(model_id: impl Into<String>, losses: &[f64]) -> Result<Self> {
        let records = losses
            .iter()
            .enumerate()
            .map(|(i, &l)| LossRecord::new(format!("s{}", i + 1), l))
            .collect();
        Self::new(model_id, records)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn records(&self) -> &[LossRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.loss)
    }

    pub fn summarize(&self) -> DatasetSummary {
        self.profile.summary()
    }

    pub(crate) fn profile(&self) -> &LossProfile {
        &self.profile
    }

    /// Same records under a different model id.
    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Collapses each augmentation group to one record whose loss is the
    /// group's mean loss.
    ///
    /// Output records keep first-appearance order of groups, take the group
    /// id as their sample id, and carry no group or gradient annotations.
    pub fn reduce_augmented(&self) -> Result<Reduction> {
        let mut order: Vec<&str> = Vec::new();
        let mut members: HashMap<&str, Vec<f64>> = HashMap::new();
        for record in &self.records {
            let group = record
                .group_id
                .as_deref()
                .ok_or_else(|| Error::MissingGroupId {
                    sample_id: record.sample_id.clone(),
                })?;
            members
                .entry(group)
                .or_insert_with(|| {
                    order.push(group);
                    Vec::new()
                })
                .push(record.loss);
        }

        let mut group_sizes = Vec::with_capacity(order.len());
        let records = order
            .iter()
            .map(|&group| {
                let losses = members.get_mut(group).unwrap();
                losses.sort_by(f64::total_cmp);
                group_sizes.push(losses.len());
                let mean = losses.iter().sum::<f64>() / losses.len() as f64;
                LossRecord::new(group, mean)
            })
            .collect();
        let equal_group_sizes = group_sizes.windows(2).all(|w| w[0] == w[1]);
        Ok(Reduction {
            dataset: LossDataset::new(self.model_id.clone(), records)?,
            group_sizes,
            equal_group_sizes,
        })
    }

    /// Relabels groups through an outer grouping so that a single reduction
    /// over the new labels realises the composed augmentation.
    ///
    /// Each record is keyed by its `group_id`, or by its `sample_id` when it
    /// has none (the shape produced by [`reduce_augmented`]). The key is
    /// replaced by `outer[key]`.
    ///
    /// [`reduce_augmented`]: LossDataset::reduce_augmented
    pub fn compose_augmented(&self, outer: &HashMap<String, String>) -> Result<LossDataset> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let key = r.group_id.as_ref().unwrap_or(&r.sample_id);
                let outer_group = outer
                    .get(key)
                    .ok_or_else(|| Error::UnknownSampleId(key.clone()))?;
                let mut relabelled = r.clone();
                relabelled.group_id = Some(outer_group.clone());
                Ok(relabelled)
            })
            .collect::<Result<Vec<_>>>()?;
        LossDataset::new(self.model_id.clone(), records)
    }

    /// Same loss multiset with group and gradient annotations removed.
    pub fn flattened(&self) -> LossDataset {
        let records = self
            .records
            .iter()
            .map(|r| LossRecord::new(r.sample_id.clone(), r.loss))
            .collect();
        LossDataset {
            model_id: self.model_id.clone(),
            records,
            profile: self.profile.clone(),
        }
    }
}

/// Output of [`LossDataset::reduce_augmented`].
#[derive(Debug, Clone)]
pub struct Reduction {
    pub dataset: LossDataset,
    pub group_sizes: Vec<usize>,
    /// When false the reduced mean is a mean of group means, not the grand mean.
    pub equal_group_sizes: bool,
}

/// Parameter count, training size, confidence and interpolation threshold
/// entering the generalization bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub param_count: u64,
    pub train_size: u64,
    pub delta: f64,
    pub epsilon: f64,
}

impl ModelMeta {
    pub fn new(param_count: u64, train_size: u64, delta: f64, epsilon: f64) -> Result<Self> {
        let meta = Self {
            param_count,
            train_size,
            delta,
            epsilon,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.param_count == 0 {
            return Err(Error::InvalidMeta("param_count must be >= 1".into()));
        }
        if self.train_size == 0 {
            return Err(Error::InvalidMeta("train_size must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidMeta(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidMeta(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn grouped(groups: &[(&str, &[f64])]) -> LossDataset {
        let mut records = Vec::new();
        for (g, losses) in groups {
            for (i, &l) in losses.iter().enumerate() {
                records.push(LossRecord::new(format!("{g}-{i}"), l).with_group(*g));
            }
        }
        LossDataset::new("m", records).unwrap()
    }

    #[test]
    fn summary_of_constant_dataset() {
        let ds = LossDataset::from_losses("m", &[0.7, 0.7, 0.7]).unwrap();
        let s = ds.summarize();
        assert_eq!(s.count, 3);
        assert_eq!(s.empirical_loss, 0.7);
        assert_eq!(s.min_loss, 0.7);
        assert_eq!(s.min_loss_count, 3);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.bregman_max(), 0.0);
    }

    #[test]
    fn summary_of_two_points() {
        let ds = LossDataset::from_losses("m", &[0.0, LN2]).unwrap();
        let s = ds.summarize();
        assert_eq!(s.count, 2);
        assert!((s.empirical_loss - 0.346_573_590_279_972_6).abs() < 1e-15);
        assert_eq!(s.min_loss, 0.0);
        assert_eq!(s.min_loss_count, 1);
        assert!((s.variance - LN2 * LN2 / 4.0).abs() < 1e-15);
        assert!((s.variance - 0.120_113).abs() < 1e-6);
    }

    #[test]
    fn tie_tolerance_counts_near_minimum() {
        let ds = LossDataset::from_losses("m", &[1.0, 1.0 + 5e-13, 1.0 + 1e-9]).unwrap();
        assert_eq!(ds.summarize().min_loss_count, 2);
    }

    #[test]
    fn rejects_invalid_losses() {
        assert!(matches!(
            LossDataset::from_losses("m", &[0.1, -0.1]),
            Err(Error::InvalidRecord(_))
        ));
        assert!(matches!(
            LossDataset::from_losses("m", &[f64::NAN]),
            Err(Error::InvalidRecord(_))
        ));
        assert!(matches!(
            LossDataset::from_losses("m", &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn gradient_vectors_must_agree() {
        let records = vec![
            LossRecord::new("a", 0.1).with_grad_theta(vec![1.0, 2.0]),
            LossRecord::new("b", 0.2).with_grad_theta(vec![1.0]),
        ];
        assert!(matches!(
            LossDataset::new("m", records),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        let partial = vec![
            LossRecord::new("a", 0.1).with_grad_theta(vec![1.0]),
            LossRecord::new("b", 0.2),
        ];
        assert!(LossDataset::new("m", partial).is_err());
    }

    #[test]
    fn reduce_two_values() {
        let ds = grouped(&[("g1", &[1.0, 3.0])]);
        let red = ds.reduce_augmented().unwrap();
        assert_eq!(red.dataset.records(), &[LossRecord::new("g1", 2.0)]);
        assert!(red.equal_group_sizes);
    }

    #[test]
    fn reduce_hand_example() {
        let ds = grouped(&[("g1", &[0.0, LN2]), ("g2", &[LN2, LN2])]);
        let red = ds.reduce_augmented().unwrap().dataset;
        let r = red.records();
        assert_eq!(r[0].sample_id, "g1");
        assert!((r[0].loss - LN2 / 2.0).abs() < 1e-16);
        assert_eq!(r[1].sample_id, "g2");
        assert_eq!(r[1].loss, LN2);
        assert!(red.summarize().min_loss >= ds.summarize().min_loss);
    }

    #[test]
    fn singleton_groups_are_identity() {
        let ds = grouped(&[("a", &[0.3]), ("b", &[1.2]), ("c", &[0.0])]);
        let red = ds.reduce_augmented().unwrap().dataset;
        let mut before: Vec<f64> = ds.losses().collect();
        let mut after: Vec<f64> = red.losses().collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);
    }

    #[test]
    fn reduce_requires_groups() {
        let ds = LossDataset::from_losses("m", &[0.1, 0.2]).unwrap();
        assert!(matches!(
            ds.reduce_augmented(),
            Err(Error::MissingGroupId { .. })
        ));
    }

    #[test]
    fn unequal_groups_flagged() {
        let ds = grouped(&[("a", &[0.0, 1.0, 2.0]), ("b", &[4.0])]);
        let red = ds.reduce_augmented().unwrap();
        assert!(!red.equal_group_sizes);
        assert_eq!(red.group_sizes, vec![3, 1]);
        // mean of group means, not the grand mean
        assert_eq!(red.dataset.summarize().empirical_loss, 2.5);
        assert_eq!(ds.summarize().empirical_loss, 1.75);
    }

    #[test]
    fn compose_identity_and_collapse() {
        let ds = grouped(&[("g1", &[0.0, 1.0]), ("g2", &[2.0, 5.0])]);
        let identity: HashMap<String, String> = [("g1", "g1"), ("g2", "g2")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(ds.compose_augmented(&identity).unwrap(), ds);

        let collapse: HashMap<String, String> = [("g1", "all"), ("g2", "all")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let red = ds
            .compose_augmented(&collapse)
            .unwrap()
            .reduce_augmented()
            .unwrap()
            .dataset;
        assert_eq!(red.len(), 1);
        assert_eq!(red.records()[0].loss, 2.0);

        let partial: HashMap<String, String> = [("g1".to_string(), "x".to_string())].into();
        assert!(
            matches!(ds.compose_augmented(&partial), Err(Error::UnknownSampleId(id)) if id == "g2")
        );
    }

    #[test]
    fn nested_grouping_sequential_equals_composed() {
        // brute force on 4 records: ((a,b),(c,d)) nested into one outer group
        let losses = [0.25, 1.5, 0.75, 3.0];
        let ds = grouped(&[("g1", &losses[..2]), ("g2", &losses[2..])]);
        let outer: HashMap<String, String> = [("g1", "h"), ("g2", "h")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();

        let inner = ds.reduce_augmented().unwrap().dataset;
        let sequential = inner
            .compose_augmented(&outer)
            .unwrap()
            .reduce_augmented()
            .unwrap()
            .dataset;
        let composed = ds
            .compose_augmented(&outer)
            .unwrap()
            .reduce_augmented()
            .unwrap()
            .dataset;

        let expected = ((0.25 + 1.5) / 2.0 + (0.75 + 3.0) / 2.0) / 2.0;
        assert_eq!(sequential.records()[0].loss, expected);
        assert_eq!(composed.records()[0].loss, expected);
    }

    #[test]
    fn model_meta_validation() {
        assert!(ModelMeta::new(10, 1000, 0.05, 0.0).is_ok());
        assert!(ModelMeta::new(0, 1000, 0.05, 0.0).is_err());
        assert!(ModelMeta::new(1, 0, 0.05, 0.0).is_err());
        assert!(ModelMeta::new(1, 1, 1.0, 0.0).is_err());
        assert!(ModelMeta::new(1, 1, 0.5, -1.0).is_err());
    }
}
